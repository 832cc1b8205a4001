"""Definition of the CCC asymmetric power GARCH model: orders and parameters with their
validation, the conditional variance filter (same recursion whether the power is known
or estimated), simulation, the top Lyapunov exponent used as strict stationarity check
and the analytic derivatives of the conditional covariances.

Conventions used across the package:

- A series is a (n, d) float array, row t being the return vector at time t.
- The full parameter vector is (ω, vec A⁺₁..q, vec A⁻₁..q, vec B₁..p, ρ, δ) where vec
  stacks columns, ρ is the strict lower triangle of R in row-major order and δ is only
  part of the vector when the power is estimated.
- The filter state is h^{δ/2}, named `h_pow`, the conditional variances are
  h = h_pow^{2/δ} componentwise.
"""

import numpy as np

from .linalg import RngStream, SymFactors, NotPositiveDefiniteError, \
    sym_sqrt_inv, sym_sqrt_inv_stack, draw_std_normal
from .util import corr_from_rho, lower_indices

from typing import Dict, List, Optional, Union


OVERFLOW_LIMIT = 1e300


class PowerMode:
    """Constants for the two ways of handling the power δ.
    """
    KNOWN = "known"
    ESTIMATED = "estimated"

    ALL = (KNOWN, ESTIMATED)


class ModelOrder:
    """Dimension and orders of a CCC-APGARCH(p,q) model, with the power mode. The order
    determines the layout of the parameter vector.
    """

    __slots__ = "d", "p", "q", "power_mode"

    def __init__(self, d: int, p: int, q: int, power_mode: str = PowerMode.KNOWN) -> None:
        if d < 1:
            raise ValueError(f"order: dimension must be at least 1, got {d}")
        if p < 0 or q < 0:
            raise ValueError(f"order: orders must be non-negative, got p={p}, q={q}")
        if power_mode not in PowerMode.ALL:
            raise ValueError(f"order: unknown power mode {power_mode!r}")
        self.d = int(d)
        self.p = int(p)
        self.q = int(q)
        self.power_mode = power_mode

    @classmethod
    def from_str(cls, s: str, power_mode: str = PowerMode.KNOWN) -> "ModelOrder":
        """Parse an order given as "d,p,q".
        """
        parts = s.split(",")
        if len(parts) != 3:
            raise ValueError(f"order: expected 'd,p,q', got {s!r}")
        d, p, q = (int(part) for part in parts)
        return cls(d, p, q, power_mode)

    @property
    def estimated(self) -> bool:
        return self.power_mode == PowerMode.ESTIMATED

    @property
    def max_lag(self) -> int:
        return max(self.p, self.q)

    @property
    def n_theta(self) -> int:
        """Number of volatility and correlation coefficients (δ excluded).
        """
        d = self.d
        return d + d * d * (self.p + 2 * self.q) + d * (d - 1) // 2

    @property
    def n_params(self) -> int:
        """Number of coordinates of the estimated parameter vector.
        """
        return self.n_theta + (self.d if self.estimated else 0)

    def slices(self) -> Dict[str, slice]:
        """Slices of each parameter group within the parameter vector. The "delta" slice
        is always given and is empty in known power mode.
        """
        d, p, q = self.d, self.p, self.q
        out = {}
        pos = 0
        for name, size in (("omega", d), ("a_plus", q * d * d), ("a_minus", q * d * d),
                           ("b", p * d * d), ("rho", d * (d - 1) // 2),
                           ("delta", d if self.estimated else 0)):
            out[name] = slice(pos, pos + size)
            pos += size
        return out

    def with_mode(self, power_mode: str) -> "ModelOrder":
        return ModelOrder(self.d, self.p, self.q, power_mode)

    def same_orders(self, other: "ModelOrder") -> bool:
        """Return true if dimension and orders are equal, whatever the power mode.
        """
        return (self.d, self.p, self.q) == (other.d, other.p, other.q)

    def __str__(self) -> str:
        return f"{self.d},{self.p},{self.q}"

    def __repr__(self) -> str:
        return f"<ModelOrder d={self.d} p={self.p} q={self.q} {self.power_mode}>"

    def __eq__(self, other) -> bool:
        return isinstance(other, ModelOrder) and \
            (self.d, self.p, self.q, self.power_mode) == (other.d, other.p, other.q, other.power_mode)

    def __hash__(self) -> int:
        return hash((self.d, self.p, self.q, self.power_mode))


class Params:
    """Parameters of a CCC-APGARCH model. Arrays are stored as floats with shapes
    omega (d,), a_plus (q, d, d), a_minus (q, d, d), b (p, d, d), rho (d(d-1)/2,) and
    delta (d,). The power is always present: when it is known it is simply not part of
    the estimated vector.
    """

    __slots__ = "omega", "a_plus", "a_minus", "b", "rho", "delta"

    def __init__(self,
        omega,
        a_plus,
        a_minus,
        b,
        rho,
        delta,
    ) -> None:
        self.omega = np.array(omega, dtype=float).reshape(-1)
        d = self.omega.shape[0]
        self.a_plus = np.array(a_plus, dtype=float).reshape(-1, d, d)
        self.a_minus = np.array(a_minus, dtype=float).reshape(-1, d, d)
        self.b = np.array(b, dtype=float).reshape(-1, d, d)
        self.rho = np.array(rho, dtype=float).reshape(-1)
        self.delta = np.array(delta, dtype=float).reshape(-1)

    @property
    def d(self) -> int:
        return self.omega.shape[0]

    def corr(self) -> np.ndarray:
        """The constant conditional correlation matrix R.
        """
        return corr_from_rho(self.rho, self.d)

    def check_shapes(self, order: ModelOrder) -> None:
        """Raise a value error if array shapes don't match the given order.
        """
        d, p, q = order.d, order.p, order.q
        expected = {
            "omega": (d,),
            "a_plus": (q, d, d),
            "a_minus": (q, d, d),
            "b": (p, d, d),
            "rho": (d * (d - 1) // 2,),
            "delta": (d,),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise ValueError(f"params: {name} has shape {actual}, expected {shape} for order {order}")

    def to_vector(self, order: ModelOrder) -> np.ndarray:
        """Flatten into the parameter vector laid out for the given order.
        """
        self.check_shapes(order)
        parts = [
            self.omega,
            np.swapaxes(self.a_plus, 1, 2).reshape(-1),
            np.swapaxes(self.a_minus, 1, 2).reshape(-1),
            np.swapaxes(self.b, 1, 2).reshape(-1),
            self.rho,
        ]
        if order.estimated:
            parts.append(self.delta)
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, order: ModelOrder, vector: np.ndarray, delta: Optional[np.ndarray] = None) -> "Params":
        """Rebuild parameters from a vector laid out for the given order. In known power
        mode the power is not in the vector and must be given.
        """
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (order.n_params,):
            raise ValueError(f"params: vector has shape {vector.shape}, expected ({order.n_params},)")
        d = order.d
        sl = order.slices()

        def matrices(name: str) -> np.ndarray:
            return np.swapaxes(vector[sl[name]].reshape(-1, d, d), 1, 2)

        if order.estimated:
            delta = vector[sl["delta"]]
        elif delta is None:
            raise ValueError("params: known power must be given when not part of the vector")

        return cls(vector[sl["omega"]], matrices("a_plus"), matrices("a_minus"),
                   matrices("b"), vector[sl["rho"]], delta)

    def copy(self) -> "Params":
        return Params(self.omega, self.a_plus, self.a_minus, self.b, self.rho, self.delta)

    def to_dict(self) -> dict:
        """Plain dictionary with nested lists, matrices are row-major.
        """
        return {
            "omega": self.omega.tolist(),
            "a_plus": self.a_plus.tolist(),
            "a_minus": self.a_minus.tolist(),
            "b": self.b.tolist(),
            "rho": self.rho.tolist(),
            "delta": self.delta.tolist(),
        }

    @classmethod
    def from_dict(cls, order: ModelOrder, data: dict) -> "Params":
        """Parse parameters from a dictionary as produced by `to_dict`. Missing matrix
        groups default to empty when the corresponding order is zero.
        """
        d = order.d
        try:
            omega = data["omega"]
            rho = data.get("rho", [])
            delta = data.get("delta", [2.0] * d)
        except (KeyError, AttributeError):
            raise ValueError("params: 'omega' is required")
        params = cls(
            omega,
            data.get("a_plus", np.zeros((0, d, d))),
            data.get("a_minus", np.zeros((0, d, d))),
            data.get("b", np.zeros((0, d, d))),
            rho,
            delta)
        params.check_shapes(order)
        return params

    def __repr__(self) -> str:
        return f"<Params d={self.d} omega={self.omega.tolist()} delta={self.delta.tolist()}>"


def parameter_names(order: ModelOrder) -> List[str]:
    """Human readable names of the coordinates of the parameter vector, indices are
    1-based.
    """
    d = order.d
    names = [f"omega[{i + 1}]" for i in range(d)]
    for group, count in (("a_plus", order.q), ("a_minus", order.q), ("b", order.p)):
        for lag in range(1, count + 1):
            # Column-major order, the row index moves first.
            names.extend(f"{group}{lag}[{i + 1},{j + 1}]" for j in range(d) for i in range(d))
    rows, cols = lower_indices(d)
    names.extend(f"rho[{i + 1},{j + 1}]" for i, j in zip(rows, cols))
    if order.estimated:
        names.extend(f"delta[{i + 1}]" for i in range(d))
    return names


def validate_params(order: ModelOrder, params: Params) -> Params:
    """Check that parameters are admissible for the given order: positive intercept,
    non-negative coefficient matrices, a positive definite correlation matrix and a
    positive power. The same parameters are returned if valid.
    """

    params.check_shapes(order)

    for i, value in enumerate(params.omega):
        if not value > 0:
            raise InvalidOmegaError(i, float(value))

    for name in ("a_plus", "a_minus", "b"):
        matrices = getattr(params, name)
        bad = np.argwhere(~(matrices >= 0))
        if len(bad):
            lag, i, j = bad[0]
            raise NegativeCoefficientError(name, int(lag) + 1, int(i), int(j), float(matrices[lag, i, j]))

    for k, value in enumerate(params.rho):
        if not abs(value) < 1:
            raise InvalidCorrelationError(f"coefficient {k} is {value!r}")
    if order.d > 1:
        try:
            sym_sqrt_inv(params.corr())
        except NotPositiveDefiniteError as error:
            raise InvalidCorrelationError(f"not positive definite ({error})")

    for i, value in enumerate(params.delta):
        if not value > 0:
            raise InvalidDeltaError(i, float(value))

    return params


class InitPolicy:
    """Base class for the choice of pre-sample values of the filter. The recursion runs
    for every observation, values before the first observation are taken from here.
    """

    name = "abstract"

    def pre_sample(self, order: ModelOrder, params: Params) -> "PreSample":
        raise NotImplementedError


class PreSample:
    """Pre-sample values, row j is the value at time -(j+1). The flag tells if the
    pre-sample h_pow rows move with ω (their derivative with respect to ω is identity).
    """

    __slots__ = "h_pow", "eps", "follows_omega"

    def __init__(self, h_pow: np.ndarray, eps: np.ndarray, follows_omega: bool) -> None:
        self.h_pow = h_pow
        self.eps = eps
        self.follows_omega = follows_omega


class OmegaStart(InitPolicy):
    """Pre-sample h_pow set to ω and pre-sample returns set to zero. This is the
    default policy.
    """

    name = "omega_start"

    def pre_sample(self, order: ModelOrder, params: Params) -> PreSample:
        return PreSample(
            np.tile(params.omega, (order.p, 1)),
            np.zeros((order.q, order.d)),
            True)

    def __repr__(self) -> str:
        return "<OmegaStart>"


class CustomStart(InitPolicy):
    """Fixed pre-sample values. The h_pow values are given as a d-vector repeated over
    the p lags, or as a (p, d) array. Pre-sample returns default to zero.
    """

    name = "custom"

    def __init__(self, h_pow, eps=None) -> None:
        self.h_pow = np.array(h_pow, dtype=float)
        self.eps = None if eps is None else np.array(eps, dtype=float)
        if np.any(self.h_pow < 0):
            raise ValueError("init: pre-sample h_pow must be non-negative")

    def pre_sample(self, order: ModelOrder, params: Params) -> PreSample:
        d, p, q = order.d, order.p, order.q
        h_pow = np.broadcast_to(self.h_pow, (p, d)).copy() if self.h_pow.ndim <= 1 else self.h_pow
        if h_pow.shape != (p, d):
            raise ValueError(f"init: pre-sample h_pow has shape {h_pow.shape}, expected {(p, d)}")
        if self.eps is None:
            eps = np.zeros((q, d))
        else:
            eps = np.broadcast_to(self.eps, (q, d)).copy() if self.eps.ndim <= 1 else self.eps
            if eps.shape != (q, d):
                raise ValueError(f"init: pre-sample returns have shape {eps.shape}, expected {(q, d)}")
        return PreSample(h_pow, eps, False)

    def __repr__(self) -> str:
        return f"<CustomStart {self.h_pow.tolist()}>"


OMEGA_START = OmegaStart()


class VolatilityPath:
    """Conditional quantities of a filtered series, immutable after construction.

    - h_pow (n, d): h_t^{δ/2}
    - h (n, d): conditional variances
    - H (n, d, d): conditional covariances D_t R D_t
    - H_inv, H_inv_sqrt (n, d, d) and H_logdet (n,): cached operators of H_t
    - pre: the pre-sample values the recursion started from
    """

    __slots__ = "h_pow", "h", "H", "H_inv", "H_inv_sqrt", "H_logdet", "corr", "pre", "init"

    def __init__(self, h_pow: np.ndarray, h: np.ndarray, H: np.ndarray, factors: SymFactors,
                 corr: np.ndarray, pre: PreSample, init: InitPolicy) -> None:
        self.h_pow = _frozen(h_pow)
        self.h = _frozen(h)
        self.H = _frozen(H)
        self.H_inv = _frozen(factors.inv)
        self.H_inv_sqrt = _frozen(factors.inv_sqrt)
        self.H_logdet = _frozen(factors.logdet)
        self.corr = _frozen(corr)
        self.pre = pre
        self.init = init

    @property
    def n(self) -> int:
        return self.h_pow.shape[0]


def as_series(series, d: Optional[int] = None) -> np.ndarray:
    """Check and convert a series to a (n, d) float array with finite entries.
    """
    values = np.asarray(series, dtype=float)
    if values.ndim == 1 and d == 1:
        values = values[:, None]
    if values.ndim != 2:
        raise ValueError(f"series: expected a (n, d) matrix, got shape {values.shape}")
    if d is not None and values.shape[1] != d:
        raise ValueError(f"series: expected {d} columns, got {values.shape[1]}")
    if values.shape[0] < 1:
        raise ValueError("series: no observation")
    if not np.all(np.isfinite(values)):
        raise ValueError("series: non-finite entries")
    return values


def powered_parts(eps: np.ndarray, delta: np.ndarray):
    """Return ((ε⁺)^δ, (ε⁻)^δ) componentwise, where ε⁺ = max(ε, 0), ε⁻ = max(-ε, 0).
    """
    return np.maximum(eps, 0.0) ** delta, np.maximum(-eps, 0.0) ** delta


def volatility_filter(order: ModelOrder, params: Params, series, init: InitPolicy = OMEGA_START) -> VolatilityPath:
    """Run the conditional variance recursion over the series:

        h_pow_t = ω + Σ_i A⁺_i (ε⁺_{t-i})^δ + A⁻_i (ε⁻_{t-i})^δ + Σ_j B_j h_pow_{t-j}

    for t = 0..n-1, with values before the first observation taken from the policy.
    The recursion doesn't depend on the power mode.

    :raises NumericOverflowError: If the path explodes, with the first offending time.
    """

    d, p, q = order.d, order.p, order.q
    eps = as_series(series, d)
    n = eps.shape[0]
    pre = init.pre_sample(order, params)

    h_pow = _arch_part(params, eps, pre)
    if p:
        _garch_recursion(params.b, h_pow, pre.h_pow)

    with np.errstate(over="ignore", invalid="ignore"):
        h = h_pow ** (2.0 / params.delta)

    bad = ~(np.isfinite(h_pow) & (h_pow <= OVERFLOW_LIMIT) & np.isfinite(h) & (h > 0))
    if np.any(bad):
        raise NumericOverflowError(int(np.argmax(np.any(bad, axis=1))))

    corr = params.corr()
    s = np.sqrt(h)
    H = s[:, :, None] * corr[None, :, :] * s[:, None, :]
    factors = sym_sqrt_inv_stack(H)

    return VolatilityPath(h_pow, h, H, factors, corr, pre, init)


def _arch_part(params: Params, eps: np.ndarray, pre: PreSample) -> np.ndarray:
    """Intercept plus the ARCH terms of the recursion for every time, as a new array.
    """
    n, d = eps.shape
    q = params.a_plus.shape[0]
    out = np.tile(params.omega, (n, 1))
    if q:
        with np.errstate(over="ignore", invalid="ignore"):
            plus, minus = powered_parts(np.vstack((pre.eps[::-1], eps)), params.delta)
            for i in range(1, q + 1):
                out += plus[q - i:q - i + n] @ params.a_plus[i - 1].T
                out += minus[q - i:q - i + n] @ params.a_minus[i - 1].T
    return out


def _garch_recursion(b: np.ndarray, h_pow: np.ndarray, pre_h_pow: np.ndarray) -> None:
    """Add the GARCH terms in place, h_pow holding the ARCH part on input.
    """
    n = h_pow.shape[0]
    p = b.shape[0]
    # Lag-major concatenation so that a window of p past rows, oldest first, multiplies
    # the matching B matrices.
    b_cat = np.concatenate([b[j].T for j in range(p - 1, -1, -1)], axis=0)
    padded = np.vstack((pre_h_pow[::-1], h_pow))
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(n):
            padded[t + p] += padded[t:t + p].reshape(-1) @ b_cat
            if not np.all(padded[t + p] < OVERFLOW_LIMIT):
                # Keep the overflow so the caller locates it, no need to go further.
                padded[t + p:] = np.inf
                break
    h_pow[:] = padded[p:]


def simulate(order: ModelOrder, params: Params, n: int, burn_in: int, rng: RngStream) -> np.ndarray:
    """Simulate n observations of the model with iid standard gaussian innovations, the
    recursion being started at h_pow = ω with zero past returns. The first `burn_in`
    observations are discarded. Returns are ε_t = D_t R^{1/2} η_t.
    """

    if n < 1 or burn_in < 0:
        raise ValueError(f"simulate: invalid lengths n={n}, burn_in={burn_in}")

    validate_params(order, params)

    d, p, q = order.d, order.p, order.q
    total = n + burn_in
    eta = draw_std_normal(rng, total * d).reshape(total, d)
    corr_sqrt = sym_sqrt_inv(params.corr()).sqrt
    shocks = eta @ corr_sqrt.T
    exponent = 2.0 / params.delta

    # Past values, index 0 is the most recent.
    past_plus = np.zeros((q, d))
    past_minus = np.zeros((q, d))
    past_h_pow = np.tile(params.omega, (p, 1))

    out = np.empty((total, d))
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(total):
            h_pow = params.omega.copy()
            for i in range(q):
                h_pow += params.a_plus[i] @ past_plus[i] + params.a_minus[i] @ past_minus[i]
            for j in range(p):
                h_pow += params.b[j] @ past_h_pow[j]
            h = h_pow ** exponent
            if not (np.all(h_pow <= OVERFLOW_LIMIT) and np.all(np.isfinite(h))):
                raise NumericOverflowError(t)
            e = np.sqrt(h) * shocks[t]
            out[t] = e
            if q:
                past_plus[1:] = past_plus[:-1]
                past_minus[1:] = past_minus[:-1]
                past_plus[0], past_minus[0] = powered_parts(e, params.delta)
            if p:
                past_h_pow[1:] = past_h_pow[:-1]
                past_h_pow[0] = h_pow

    return out[burn_in:]


class LyapunovEstimate:
    """Estimate of the top Lyapunov exponent with its Monte Carlo standard error.
    """

    STATIONARY = "stationary"
    EXPLOSIVE = "explosive"
    INCONCLUSIVE = "inconclusive"

    __slots__ = "gamma_hat", "n_products", "std_err"

    def __init__(self, gamma_hat: float, n_products: int, std_err: float) -> None:
        self.gamma_hat = gamma_hat
        self.n_products = n_products
        self.std_err = std_err

    def verdict(self) -> str:
        """Verdict at two standard errors.
        """
        if self.gamma_hat + 2 * self.std_err < 0:
            return self.STATIONARY
        elif self.gamma_hat - 2 * self.std_err > 0:
            return self.EXPLOSIVE
        return self.INCONCLUSIVE

    def __repr__(self) -> str:
        return f"<LyapunovEstimate {self.gamma_hat:.4f} ± {self.std_err:.4f} ({self.n_products})>"


def companion_matrix(order: ModelOrder, params: Params, shock: np.ndarray) -> np.ndarray:
    """Random companion matrix of the stacked state ((ε⁺)^δ lags, (ε⁻)^δ lags, h_pow
    lags), for one correlated shock η̄ = R^{1/2} η.
    """
    d, p, q = order.d, order.p, order.q
    dim = (2 * q + p) * d
    coefs = np.concatenate(list(params.a_plus) + list(params.a_minus) + list(params.b), axis=1)
    plus, minus = powered_parts(shock, params.delta)

    c = np.zeros((dim, dim))
    for start, count, scale in ((0, q, plus), (q * d, q, minus), (2 * q * d, p, None)):
        if not count:
            continue
        c[start:start + d] = coefs if scale is None else scale[:, None] * coefs
        # Shift of the older lags of this block.
        for k in range(1, count):
            row = start + k * d
            c[row:row + d, row - d:row] = np.eye(d)
    return c


def lyapunov_exponent(order: ModelOrder, params: Params, rng: RngStream,
                      n_products: int = 10000, *, renorm_period: int = 10) -> LyapunovEstimate:
    """Estimate the top Lyapunov exponent of the random companion matrices by the
    growth rate of their product, renormalized by its Frobenius norm every
    `renorm_period` products. The standard error comes from batch means of the log
    growth between renormalizations.

    :raises DegenerateOrderError: If p + q = 0.
    """

    if order.p + order.q == 0:
        raise DegenerateOrderError()
    if n_products < 1 or renorm_period < 1:
        raise ValueError("lyapunov: product count and period must be positive")

    validate_params(order, params)

    d = order.d
    corr_sqrt = sym_sqrt_inv(params.corr()).sqrt
    shocks = draw_std_normal(rng, n_products * d).reshape(n_products, d) @ corr_sqrt.T

    dim = (2 * order.q + order.p) * d
    prod = np.eye(dim)
    growths = []
    steps = []
    since = 0

    for t in range(n_products):
        prod = companion_matrix(order, params, shocks[t]) @ prod
        since += 1
        if since == renorm_period or t == n_products - 1:
            norm = np.linalg.norm(prod)
            if norm == 0.0:
                return LyapunovEstimate(float("-inf"), n_products, 0.0)
            growths.append(np.log(norm))
            steps.append(since)
            prod /= norm
            since = 0

    growths = np.array(growths)
    steps = np.array(steps)
    gamma_hat = float(np.sum(growths) / n_products)

    # Batch means over groups of consecutive renormalization blocks.
    n_batches = min(50, len(growths))
    if n_batches < 2:
        return LyapunovEstimate(gamma_hat, n_products, float("nan"))
    batch_rates = [np.sum(g) / np.sum(s) for g, s in zip(np.array_split(growths, n_batches), np.array_split(steps, n_batches))]
    std_err = float(np.std(batch_rates, ddof=1) / np.sqrt(n_batches))

    return LyapunovEstimate(gamma_hat, n_products, std_err)


class DerivStack:
    """Derivatives of the conditional quantities with respect to the parameter vector.

    - dh_pow (n, s, d): ∂h_pow_t/∂ϑ_k
    - dh (n, s, d): ∂h_t/∂ϑ_k
    - dH (n, s, d, d): ∂H_t/∂ϑ_k
    """

    __slots__ = "dh_pow", "dh", "dH", "with_delta"

    def __init__(self, dh_pow: np.ndarray, dh: np.ndarray, dH: np.ndarray, with_delta: bool) -> None:
        self.dh_pow = _frozen(dh_pow)
        self.dh = _frozen(dh)
        self.dH = _frozen(dH)
        self.with_delta = with_delta

    @property
    def n_params(self) -> int:
        return self.dH.shape[1]


def volatility_derivatives(order: ModelOrder, params: Params, series, path: VolatilityPath, *,
                           with_delta: Optional[bool] = None) -> DerivStack:
    """Compute the derivatives of h_pow, h and H with respect to every coordinate of the
    parameter vector, through the linear recursion

        ∂h_pow_t = c_t + Σ_j B_j ∂h_pow_{t-j}

    where c_t holds 1 at the ω slot, the powered parts of past returns at the A slots,
    past h_pow at the B slots and, for the power, the Σ A log(ε^±)(ε^±)^δ terms (zero
    where ε^± = 0).

    :param with_delta: Whether to include power coordinates, defaults to the power mode
    of the order. Power coordinates can't be requested in known power mode.
    :raises ModeMismatchError: If power coordinates are requested in known power mode.
    """

    if with_delta is None:
        with_delta = order.estimated
    elif with_delta and not order.estimated:
        raise ModeMismatchError("power coordinates requested with a known power")

    d, p, q = order.d, order.p, order.q
    eps = as_series(series, d)
    n = eps.shape[0]
    delta = params.delta
    pre = path.pre

    full = order if with_delta == order.estimated else order.with_mode(PowerMode.KNOWN)
    sl = full.slices()
    s = full.n_params

    c = np.zeros((n, s, d))
    for k in range(d):
        c[:, sl["omega"].start + k, k] = 1.0

    if q:
        padded = np.vstack((pre.eps[::-1], eps))
        plus, minus = powered_parts(padded, delta)
        for i in range(1, q + 1):
            lagged = ((sl["a_plus"], plus[q - i:q - i + n]), (sl["a_minus"], minus[q - i:q - i + n]))
            for group, values in lagged:
                base = group.start + (i - 1) * d * d
                for col in range(d):
                    for row in range(d):
                        c[:, base + row + col * d, row] = values[:, col]

    if p:
        padded_h = np.vstack((pre.h_pow[::-1], path.h_pow))
        for j in range(1, p + 1):
            values = padded_h[p - j:p - j + n]
            base = sl["b"].start + (j - 1) * d * d
            for col in range(d):
                for row in range(d):
                    c[:, base + row + col * d, row] = values[:, col]

    if with_delta and q:
        padded = np.vstack((pre.eps[::-1], eps))
        log_plus, log_minus = _log_powered_parts(padded, delta)
        for i in range(1, q + 1):
            lp = log_plus[q - i:q - i + n]
            lm = log_minus[q - i:q - i + n]
            for j in range(d):
                # Column j of A⁺_i and A⁻_i, for every output component at once.
                c[:, sl["delta"].start + j, :] += lp[:, j, None] * params.a_plus[i - 1][:, j] \
                    + lm[:, j, None] * params.a_minus[i - 1][:, j]

    if p:
        dh_pow = _derivative_recursion(params.b, c, pre, sl["omega"].start, d)
    else:
        dh_pow = c

    ratio = (2.0 / delta) * path.h / path.h_pow
    dh = ratio[:, None, :] * dh_pow
    if with_delta:
        for j in range(d):
            dh[:, sl["delta"].start + j, j] -= (2.0 / delta[j] ** 2) * path.h[:, j] * np.log(path.h_pow[:, j])

    sd = np.sqrt(path.h)
    dsd = dh / (2.0 * sd[:, None, :])
    corr = path.corr
    half = dsd[:, :, :, None] * sd[:, None, None, :]
    dH = corr[None, None, :, :] * (half + np.swapaxes(half, 2, 3))

    if d > 1:
        outer = sd[:, :, None] * sd[:, None, :]
        rows, cols = lower_indices(d)
        for k, (i, j) in enumerate(zip(rows, cols)):
            idx = sl["rho"].start + k
            dH[:, idx, i, j] += outer[:, i, j]
            dH[:, idx, j, i] += outer[:, j, i]

    return DerivStack(dh_pow, dh, dH, with_delta)


def _log_powered_parts(eps: np.ndarray, delta: np.ndarray):
    """Return (log(ε⁺)(ε⁺)^δ, log(ε⁻)(ε⁻)^δ) with the value 0 where the part is 0.
    """
    out = []
    for part in (np.maximum(eps, 0.0), np.maximum(-eps, 0.0)):
        positive = part > 0
        safe = np.where(positive, part, 1.0)
        out.append(np.where(positive, np.log(safe) * safe ** delta, 0.0))
    return out[0], out[1]


def _derivative_recursion(b: np.ndarray, c: np.ndarray, pre: PreSample, omega_start: int, d: int) -> np.ndarray:
    n, s, _ = c.shape
    p = b.shape[0]
    padded = np.zeros((n + p, s, d))
    if pre.follows_omega:
        for k in range(d):
            padded[:p, omega_start + k, k] = 1.0
    padded[p:] = c
    bt = [b[j].T for j in range(p)]
    for t in range(n):
        acc = padded[t + p]
        for j in range(1, p + 1):
            acc += padded[t + p - j] @ bt[j - 1]
    return padded[p:]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.asarray(array)
    array.setflags(write=False)
    return array


class InvalidParamsError(ValueError):
    """Base class for parameters rejected by validation.
    """

class InvalidOmegaError(InvalidParamsError):
    """Raised when an intercept component is not strictly positive.
    """
    def __init__(self, index: int, value: float) -> None:
        self.index = index
        self.value = value

    def __str__(self) -> str:
        return f"omega[{self.index}] = {self.value!r}"

class NegativeCoefficientError(InvalidParamsError):
    """Raised when an entry of A⁺, A⁻ or B is negative, lag is 1-based and the indices
    are 0-based.
    """
    def __init__(self, name: str, lag: int, i: int, j: int, value: float) -> None:
        self.name = name
        self.lag = lag
        self.i = i
        self.j = j
        self.value = value

    def __str__(self) -> str:
        return f"{self.name}{self.lag}[{self.i},{self.j}] = {self.value!r}"

class InvalidCorrelationError(InvalidParamsError):
    """Raised when a correlation is outside ]-1,1[ or R is not positive definite.
    """
    def __init__(self, reason: str) -> None:
        self.reason = reason

    def __str__(self) -> str:
        return self.reason

class InvalidDeltaError(InvalidParamsError):
    """Raised when a power component is not strictly positive.
    """
    def __init__(self, index: int, value: float) -> None:
        self.index = index
        self.value = value

    def __str__(self) -> str:
        return f"delta[{self.index}] = {self.value!r}"

class NumericOverflowError(Exception):
    """Raised when the volatility path explodes past the overflow limit, the first
    offending time is given.
    """
    def __init__(self, t: int) -> None:
        self.t = t

    def __str__(self) -> str:
        return f"overflow at t={self.t}"

class DegenerateOrderError(Exception):
    """Raised when an operation needs dynamics but p + q = 0.
    """

class ModeMismatchError(Exception):
    """Raised when power coordinates are involved while the power is known, or when
    derivatives don't match the power mode of the order.
    """
    def __init__(self, reason: str) -> None:
        self.reason = reason

    def __str__(self) -> str:
        return self.reason
