"""Gaussian quasi-maximum likelihood estimation of CCC-APGARCH models: the objective,
its analytic score, the quasi-Newton fit in an unconstrained reparameterized space and
the empirical information matrices with the sandwich variance.
"""

from scipy.special import expit, logit
from scipy.optimize import minimize
import numpy as np

from .model import ModelOrder, Params, InitPolicy, VolatilityPath, DerivStack, \
    OMEGA_START, NumericOverflowError, ModeMismatchError, \
    as_series, validate_params, volatility_filter, volatility_derivatives
from .linalg import NotPositiveDefiniteError
from .watcher import Watcher, FitStartEvent, FitIterationEvent, FitCompleteEvent, \
    SmallSampleWarningEvent

from typing import Optional, Tuple


EPS_FLOOR = 1e-8
COND_LIMIT = 1e12

# Objective value returned for inadmissible points met during line searches, so that
# the search backtracks.
PENALTY = 1e10


class Reparam:
    """Reparameterizations known by the fit, only one for now: log for the intercept,
    softplus shifted by a floor for coefficient matrices, Fisher z for correlations and
    a logistic map onto the bounds for the power.
    """
    LOG_AND_FISHER = "log_and_fisher"


class FitConfig:
    """Configuration of a fit.

    :param init_params: Starting parameters, automatic starting values if none.
    :param delta: Known power used in known power mode (ignored when `init_params` is
    given), defaults to 2 for every component.
    :param delta_bounds: Bounds of the estimated power.
    """

    __slots__ = "init_params", "max_iters", "grad_tol", "reparam", "delta_bounds", "delta", "init"

    def __init__(self, *,
        init_params: Optional[Params] = None,
        max_iters: int = 500,
        grad_tol: float = 1e-5,
        reparam: str = Reparam.LOG_AND_FISHER,
        delta_bounds: Tuple[float, float] = (0.1, 8.0),
        delta=None,
        init: InitPolicy = OMEGA_START,
    ) -> None:
        if not grad_tol > 0:
            raise ValueError(f"fit config: grad_tol must be positive, got {grad_tol}")
        lo, hi = delta_bounds
        if not 0 < lo < hi:
            raise ValueError(f"fit config: invalid delta bounds {delta_bounds}")
        if reparam != Reparam.LOG_AND_FISHER:
            raise ValueError(f"fit config: unknown reparameterization {reparam!r}")
        if max_iters < 1:
            raise ValueError(f"fit config: max_iters must be positive, got {max_iters}")
        self.init_params = init_params
        self.max_iters = max_iters
        self.grad_tol = grad_tol
        self.reparam = reparam
        self.delta_bounds = (float(lo), float(hi))
        self.delta = None if delta is None else np.array(delta, dtype=float).reshape(-1)
        self.init = init


class FitResult:
    """Result of a fit, or of an evaluation at given parameters. The path and the
    derivatives at the estimate are kept for diagnostics.
    """

    __slots__ = "order", "params_hat", "objective", "loglik_mean", "I_hat", "J_hat", "vcov", \
        "residuals", "converged", "n_used", "iterations", "grad_norm", "start", "series", \
        "path", "derivs"

    def __init__(self, order: ModelOrder, params_hat: Params, objective: float,
                 I_hat: np.ndarray, J_hat: np.ndarray, vcov: np.ndarray, residuals: np.ndarray,
                 converged: bool, iterations: int, grad_norm: float, start: Optional[Params],
                 series: np.ndarray, path: VolatilityPath, derivs: DerivStack) -> None:
        self.order = order
        self.params_hat = params_hat
        self.objective = objective
        # Table-style scaling: -(1/(2n)) Σ l_t without the gaussian constant.
        self.loglik_mean = -0.5 * objective
        self.I_hat = I_hat
        self.J_hat = J_hat
        self.vcov = vcov
        self.residuals = residuals
        self.converged = converged
        self.n_used = series.shape[0]
        self.iterations = iterations
        self.grad_norm = grad_norm
        self.start = start
        self.series = series
        self.path = path
        self.derivs = derivs

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(self.vcov), 0.0))

    @property
    def init_policy(self) -> str:
        return self.path.init.name


def quasi_loglik(order: ModelOrder, params: Params, series, init: InitPolicy = OMEGA_START) -> Tuple[float, np.ndarray]:
    """Gaussian quasi-likelihood criterion, l_t = ε_t' H_t⁻¹ ε_t + log det H_t, returned
    as its mean over all observations (the minimized quantity) and per time.
    """
    eps = as_series(series, order.d)
    path = volatility_filter(order, params, eps, init)
    per_t = _loglik_terms(eps, path)
    return float(np.mean(per_t)), per_t


def _loglik_terms(eps: np.ndarray, path: VolatilityPath) -> np.ndarray:
    return np.einsum("ti,tij,tj->t", eps, path.H_inv, eps) + path.H_logdet


def _check_mode(order: ModelOrder, derivs: DerivStack) -> None:
    if derivs.n_params != order.n_params:
        raise ModeMismatchError(f"derivatives have {derivs.n_params} coordinates, order {order!r} has {order.n_params}")


def score(order: ModelOrder, params: Params, series, path: VolatilityPath, derivs: DerivStack) -> np.ndarray:
    """Per time derivatives of l_t, shape (n, s):

        ∂l_t/∂ϑ_k = Tr[(H⁻¹ - H⁻¹εε'H⁻¹) ∂H/∂ϑ_k]
    """
    _check_mode(order, derivs)
    eps = as_series(series, order.d)
    u = np.einsum("tij,tj->ti", path.H_inv, eps)
    m = path.H_inv - u[:, :, None] * u[:, None, :]
    return np.einsum("tab,tkba->tk", m, derivs.dH)


def scaled_derivatives(path: VolatilityPath, derivs: DerivStack) -> np.ndarray:
    """H^{-1/2} ∂H/∂ϑ_k H^{-1/2} for every time and coordinate, shape (n, s, d, d).
    """
    root = path.H_inv_sqrt[:, None, :, :]
    return root @ derivs.dH @ root


def score_from_residuals(path: VolatilityPath, derivs: DerivStack, residuals: np.ndarray) -> np.ndarray:
    """Score in the form -h_t(k)' vec(η_t η_t' - I), from the symmetric-root residuals.
    """
    d = residuals.shape[1]
    s = residuals[:, :, None] * residuals[:, None, :] - np.eye(d)
    return -np.einsum("tkab,tab->tk", scaled_derivatives(path, derivs), s)


def information_matrices(order: ModelOrder, params_hat: Params, series, path: VolatilityPath,
                         derivs: DerivStack) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Empirical information matrices Î (outer product of scores) and Ĵ (mean of
    Tr(H⁻¹ ∂H_j H⁻¹ ∂H_i)), with the sandwich variance Ĵ⁻¹ÎĴ⁻¹/n.

    :raises SingularJError: If the condition number of Ĵ exceeds 1e12.
    """

    scores = score(order, params_hat, series, path, derivs)
    n = scores.shape[0]
    i_hat = scores.T @ scores / n

    g = path.H_inv[:, None, :, :] @ derivs.dH
    j_hat = np.einsum("tiab,tjba->ij", g, g) / n
    j_hat = 0.5 * (j_hat + j_hat.T)

    cond = np.linalg.cond(j_hat)
    if not cond <= COND_LIMIT:
        raise SingularJError(float(cond))

    j_inv = np.linalg.inv(j_hat)
    vcov = j_inv @ i_hat @ j_inv / n
    vcov = 0.5 * (vcov + vcov.T)
    return i_hat, j_hat, vcov


class ParamTransform:
    """Bijection between admissible parameters and the unconstrained optimization
    space, coordinate by coordinate in the parameter vector layout.
    """

    def __init__(self, order: ModelOrder, delta: np.ndarray,
                 delta_bounds: Tuple[float, float], eps_floor: float = EPS_FLOOR) -> None:
        self.order = order
        self.delta = np.array(delta, dtype=float)
        self.lo, self.hi = delta_bounds
        self.eps_floor = eps_floor
        sl = order.slices()
        self.omega = sl["omega"]
        self.coefs = slice(sl["a_plus"].start, sl["b"].stop)
        self.rho = sl["rho"]
        self.delta_sl = sl["delta"]

    def to_unconstrained(self, params: Params) -> np.ndarray:
        theta = params.to_vector(self.order)
        u = np.empty_like(theta)
        u[self.omega] = np.log(theta[self.omega])
        x = np.maximum(theta[self.coefs] - self.eps_floor, 1e-300)
        # Inverse softplus, stable for large and small arguments.
        u[self.coefs] = x + np.log(-np.expm1(-x))
        u[self.rho] = np.arctanh(theta[self.rho])
        if self.order.estimated:
            u[self.delta_sl] = logit((theta[self.delta_sl] - self.lo) / (self.hi - self.lo))
        return u

    def to_vector(self, u: np.ndarray) -> np.ndarray:
        theta = np.empty_like(u)
        theta[self.omega] = np.exp(u[self.omega])
        theta[self.coefs] = self.eps_floor + np.logaddexp(0.0, u[self.coefs])
        theta[self.rho] = np.tanh(u[self.rho])
        if self.order.estimated:
            theta[self.delta_sl] = self.lo + (self.hi - self.lo) * expit(u[self.delta_sl])
        return theta

    def to_params(self, u: np.ndarray) -> Params:
        return Params.from_vector(self.order, self.to_vector(u), self.delta)

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        """Diagonal of the jacobian of `to_vector`.
        """
        jac = np.empty_like(u)
        jac[self.omega] = np.exp(u[self.omega])
        jac[self.coefs] = expit(u[self.coefs])
        jac[self.rho] = 1.0 - np.tanh(u[self.rho]) ** 2
        if self.order.estimated:
            e = expit(u[self.delta_sl])
            jac[self.delta_sl] = (self.hi - self.lo) * e * (1.0 - e)
        return jac


def auto_init(order: ModelOrder, series, config: FitConfig) -> Params:
    """Starting values: ω from the sample variance (scaled by 0.7 and by the GARCH
    persistence), A⁺ = A⁻ = 0.05 on the diagonal, B = 0.85 split over the p lags,
    small off-diagonal coefficients, ρ from the sample correlation and δ = 2 unless a
    known power is configured.
    """

    eps = as_series(series, order.d)
    d, p, q = order.d, order.p, order.q

    if order.estimated:
        lo, hi = config.delta_bounds
        delta = np.clip(np.full(d, 2.0), lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo))
    elif config.delta is not None:
        delta = config.delta
    else:
        delta = np.full(d, 2.0)
    if delta.shape != (d,):
        raise ValueError(f"fit config: power must have {d} components")

    off = 0.02 * (1 - np.eye(d))
    a = [0.05 * np.eye(d) + off for _ in range(q)]
    b = [(0.85 / p) * np.eye(d) + off for _ in range(p)]

    variance = np.maximum(np.var(eps, axis=0), 1e-12)
    persistence = 0.85 if p else 0.0
    omega = (1.0 - 0.3) * variance ** (delta / 2.0) * (1.0 - persistence)

    if d > 1 and eps.shape[0] > 2:
        corr = np.corrcoef(eps, rowvar=False)
        rows, cols = np.tril_indices(d, -1)
        rho = np.clip(np.nan_to_num(corr[rows, cols]), -0.95, 0.95)
    else:
        rho = np.zeros(d * (d - 1) // 2)

    return Params(omega, np.array(a).reshape(q, d, d), np.array(a).reshape(q, d, d),
                  np.array(b).reshape(p, d, d), rho, delta)


def evaluate_at(order: ModelOrder, params: Params, series, *,
                init: InitPolicy = OMEGA_START,
                converged: bool = True,
                iterations: int = 0,
                grad_norm: float = float("nan"),
                start: Optional[Params] = None) -> FitResult:
    """Build a fit result at the given parameters without optimizing: residuals, the
    objective and the information matrices. Used at the estimate, or at the true
    parameter for diagnostics free of estimation error.
    """

    eps = as_series(series, order.d)
    path = volatility_filter(order, params, eps, init)
    derivs = volatility_derivatives(order, params, eps, path)
    objective = float(np.mean(_loglik_terms(eps, path)))
    i_hat, j_hat, vcov = information_matrices(order, params, eps, path, derivs)
    residuals = np.einsum("tij,tj->ti", path.H_inv_sqrt, eps)
    return FitResult(order, params, objective, i_hat, j_hat, vcov, residuals, converged,
                     iterations, grad_norm, start, eps, path, derivs)


def fit(order: ModelOrder, series, config: Optional[FitConfig] = None, *,
        watcher: Optional[Watcher] = None) -> FitResult:
    """Estimate the parameters by minimizing the mean quasi-likelihood criterion with
    BFGS in the unconstrained space. The fit is converged when the max-norm of the
    reparameterized gradient is below `grad_tol`. The minimizer is restarted from its
    last iterate (with a fresh Hessian approximation) while iterations remain.

    :raises NotConvergedError: If not converged within `max_iters` iterations.
    :raises NumericOverflowError: If no admissible point could be found from the start.
    """

    config = config or FitConfig()
    watcher = watcher or Watcher()
    eps = as_series(series, order.d)
    n = eps.shape[0]
    s = order.n_params

    if n <= order.max_lag + 1:
        raise ValueError(f"series: {n} observations are too few for order {order}")
    if n <= 10 * s:
        watcher.handle(SmallSampleWarningEvent(n, s))

    start = config.init_params.copy() if config.init_params is not None else auto_init(order, eps, config)
    validate_params(order, start)
    if order.estimated:
        lo, hi = config.delta_bounds
        if np.any(start.delta <= lo) or np.any(start.delta >= hi):
            raise ValueError(f"fit: starting power {start.delta.tolist()} outside bounds {config.delta_bounds}")

    transform = ParamTransform(order, start.delta, config.delta_bounds)
    u0 = transform.to_unconstrained(start)
    init = config.init
    last = {}

    def objective(u: np.ndarray) -> Tuple[float, np.ndarray]:
        key = u.tobytes()
        cached = last.get("key")
        if cached == key:
            return last["value"], last["grad"]
        try:
            params = transform.to_params(u)
            path = volatility_filter(order, params, eps, init)
            derivs = volatility_derivatives(order, params, eps, path)
        except (NumericOverflowError, NotPositiveDefiniteError, FloatingPointError):
            value, grad = PENALTY, np.zeros_like(u)
        else:
            value = float(np.mean(_loglik_terms(eps, path)))
            grad = np.mean(score(order, params, eps, path, derivs), axis=0) * transform.jacobian(u)
            if not (np.isfinite(value) and np.all(np.isfinite(grad))):
                value, grad = PENALTY, np.zeros_like(u)
        last.update(key=key, value=value, grad=grad)
        return value, grad

    value, grad = objective(u0)
    if value >= PENALTY:
        raise NumericOverflowError(-1)

    watcher.handle(FitStartEvent(order, n, s))

    iterations = 0
    u = u0

    def callback(uk: np.ndarray) -> None:
        nonlocal iterations
        iterations += 1
        value, grad = objective(uk)
        watcher.handle(FitIterationEvent(iterations, value, float(np.max(np.abs(grad)))))

    grad_norm = float(np.max(np.abs(grad)))
    while grad_norm >= config.grad_tol and iterations < config.max_iters:
        before = iterations
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            res = minimize(objective, u, jac=True, method="BFGS", callback=callback,
                           options={"maxiter": config.max_iters - iterations, "gtol": config.grad_tol})
        new_value, new_grad = objective(res.x)
        progressed = new_value < value
        if new_value <= value:
            u, value, grad = res.x, new_value, new_grad
        grad_norm = float(np.max(np.abs(grad)))
        if not progressed or iterations == before:
            break

    converged = grad_norm < config.grad_tol
    watcher.handle(FitCompleteEvent(iterations, value, grad_norm, converged))

    params_hat = transform.to_params(u)
    if not converged:
        raise NotConvergedError(params_hat, grad_norm, iterations)

    return evaluate_at(order, params_hat, eps, init=init, converged=True,
                       iterations=iterations, grad_norm=grad_norm, start=start)


class NotConvergedError(Exception):
    """Raised when the fit stops without meeting the gradient tolerance. The last
    iterate is given.
    """
    def __init__(self, last_iterate: Params, grad_norm: float, iterations: int) -> None:
        self.last_iterate = last_iterate
        self.grad_norm = grad_norm
        self.iterations = iterations

    def __str__(self) -> str:
        return f"gradient norm {self.grad_norm:.3g} after {self.iterations} iterations"

class SingularJError(Exception):
    """Raised when the information matrix Ĵ is numerically singular, which signals a
    near-unidentified model. The condition number is given.
    """
    def __init__(self, condition: float) -> None:
        self.condition = condition

    def __str__(self) -> str:
        return f"condition number {self.condition:.3g}"
