"""Portmanteau adequacy test based on the autocovariances of the sum of squared
residuals, S_t = ε_t' H_t⁻¹ ε_t - d. The asymptotic covariance of the autocovariances
accounts for the estimation of the model, for a known or an estimated power.
"""

import numpy as np

from .model import ModelOrder, DerivStack
from .qmle import FitResult, scaled_derivatives
from .linalg import chi2_sf, normal_quantile
from .util import vec

from typing import List, Optional, Tuple


COND_LIMIT = 1e12


class DMethod:
    """Ways of assembling the asymptotic covariance matrix D.
    """
    GENERAL = "general"
    LINGLI = "lingli"

    ALL = (GENERAL, LINGLI)


class DiagnosticSeries:
    """Sum of squared residuals series and related quantities.

    - S_hat (n,): ε_t' Ĥ_t⁻¹ ε_t - d
    - s_vecs (n, d²): vec(η̂_t η̂_t' - I_d)
    - kappa_hat: (1/n) Σ Ŝ_t²
    - residuals (n, d): η̂_t
    """

    __slots__ = "S_hat", "s_vecs", "kappa_hat", "residuals"

    def __init__(self, S_hat: np.ndarray, s_vecs: np.ndarray, kappa_hat: float, residuals: np.ndarray) -> None:
        self.S_hat = S_hat
        self.s_vecs = s_vecs
        self.kappa_hat = kappa_hat
        self.residuals = residuals

    @property
    def n(self) -> int:
        return self.S_hat.shape[0]


class CovarianceAssembly:
    """Estimated asymptotic covariances of the autocovariances (D_hat) and of the
    autocorrelations (D_rho_hat), with the pieces they are made of. `asymmetry` is the
    relative asymmetry of D before symmetrization.
    """

    __slots__ = "C_m_hat", "Sigma_hat", "D_hat", "D_rho_hat", "method", "kappa_hat", \
        "condition", "asymmetry"

    def __init__(self, C_m_hat: np.ndarray, Sigma_hat: Optional[np.ndarray], D_hat: np.ndarray,
                 D_rho_hat: np.ndarray, method: str, kappa_hat: float, condition: float,
                 asymmetry: float) -> None:
        self.C_m_hat = C_m_hat
        self.Sigma_hat = Sigma_hat
        self.D_hat = D_hat
        self.D_rho_hat = D_rho_hat
        self.method = method
        self.kappa_hat = kappa_hat
        self.condition = condition
        self.asymmetry = asymmetry

    @property
    def m(self) -> int:
        return self.D_hat.shape[0]


class TestReport:
    """Outcome of the portmanteau test at a maximum lag m.
    """

    __test__ = False  # Not a pytest class.

    __slots__ = "m", "r_hat", "rho_hat", "stat_r", "stat_rho", "pvalue_r", "pvalue_rho", "bands", "alpha"

    def __init__(self, m: int, r_hat: np.ndarray, rho_hat: np.ndarray, stat_r: float, stat_rho: float,
                 pvalue_r: float, pvalue_rho: float, bands: List[Tuple[float, float]], alpha: float) -> None:
        self.m = m
        self.r_hat = r_hat
        self.rho_hat = rho_hat
        self.stat_r = stat_r
        self.stat_rho = stat_rho
        self.pvalue_r = pvalue_r
        self.pvalue_rho = pvalue_rho
        self.bands = bands
        self.alpha = alpha

    def rejected(self, alpha: Optional[float] = None) -> bool:
        return self.pvalue_r < (self.alpha if alpha is None else alpha)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "stat_r": self.stat_r,
            "pvalue_r": self.pvalue_r,
            "stat_rho": self.stat_rho,
            "pvalue_rho": self.pvalue_rho,
            "bands": [list(band) for band in self.bands],
        }


def residual_diagnostics(fit: FitResult, d: int) -> DiagnosticSeries:
    """Compute the sum of squared residuals series of a fit. Ŝ_t comes from the
    root-free quadratic form, the vec terms from the symmetric-root residuals.
    """
    eps = fit.series
    if eps.shape[1] != d:
        raise ValueError(f"diagnostics: fit has dimension {eps.shape[1]}, got {d}")
    quad = np.einsum("ti,tij,tj->t", eps, fit.path.H_inv, eps)
    return diagnostics_from_residuals(fit.residuals, quad - d)


def diagnostics_from_residuals(residuals: np.ndarray, S_hat: Optional[np.ndarray] = None) -> DiagnosticSeries:
    """Build the diagnostic series directly from residuals, Ŝ_t defaults to η̂'η̂ - d.
    """
    residuals = np.asarray(residuals, dtype=float)
    n, d = residuals.shape
    if S_hat is None:
        S_hat = np.sum(residuals ** 2, axis=1) - d
    s = residuals[:, :, None] * residuals[:, None, :] - np.eye(d)
    return DiagnosticSeries(S_hat, vec(s), float(np.mean(S_hat ** 2)), residuals)


def autocov_sum_sq(diag: DiagnosticSeries, m: int) -> Tuple[np.ndarray, np.ndarray]:
    """Autocovariances r̂_h = (1/n) Σ_{t>h} Ŝ_t Ŝ_{t-h} and autocorrelations
    ρ̂_h = r̂_h / r̂_0 for h = 1..m.

    :raises LagTooLargeError: If m >= n.
    """
    S = diag.S_hat
    n = S.shape[0]
    if m < 1:
        raise ValueError(f"lag: must be at least 1, got {m}")
    if m >= n:
        raise LagTooLargeError(m, n)
    r0 = float(S @ S) / n
    r = np.array([S[h:] @ S[:-h] for h in range(1, m + 1)]) / n
    rho = r / r0 if r0 > 0 else np.zeros(m)
    return r, rho


def trace_terms(fit: FitResult, derivs: DerivStack) -> np.ndarray:
    """Tr(Ĥ_t⁻¹ ∂H_t/∂ϑ_k), shape (n, s).
    """
    return np.einsum("tab,tkba->tk", fit.path.H_inv, derivs.dH)


def assemble_d(order: ModelOrder, fit: FitResult, diag: DiagnosticSeries, derivs: DerivStack,
               m: int, method: str = DMethod.GENERAL) -> CovarianceAssembly:
    """Estimate the asymptotic covariance D of √n r̂_m:

    - general: κ̂² I + Ĉ Ĵ⁻¹ÎĴ⁻¹ Ĉ' + Ĉ Σ̂ + Σ̂' Ĉ'
    - lingli: d²(κ̄₄ - 1)² I + Ĉ (Ĵ⁻¹ÎĴ⁻¹ - 2(κ̄₄ - 1) Ĵ⁻¹) Ĉ', κ̄₄ being the pooled
      fourth moment of residual components

    The autocorrelation covariance is D_ρ = D / κ̂² with both methods, the lingli
    closed form (d(κ̄₄ - 1))² is not used as denominator. Sums over t - h run over
    valid times only (t > h).

    :raises SingularDError: If the condition number of D exceeds 1e12.
    """

    if method not in DMethod.ALL:
        raise ValueError(f"method: unknown {method!r}")
    if derivs.n_params != order.n_params:
        raise ValueError("derivatives: coordinate count doesn't match the order")

    S = diag.S_hat
    n = S.shape[0]
    d = order.d
    if m >= n:
        raise LagTooLargeError(m, n)

    tr = trace_terms(fit, derivs)
    c = np.empty((m, order.n_params))
    for h in range(1, m + 1):
        c[h - 1] = -(S[:n - h] @ tr[h:]) / n

    j_inv = np.linalg.inv(fit.J_hat)
    omega = j_inv @ fit.I_hat @ j_inv
    kappa = diag.kappa_hat

    if method == DMethod.GENERAL:
        # h_t(k)' vec(s_t), with s_t = η̂η̂' - I.
        scaled = scaled_derivatives(fit.path, derivs)
        hs = np.einsum("tkx,tx->tk", vec(scaled), diag.s_vecs)
        sigma = np.empty((order.n_params, m))
        for h in range(1, m + 1):
            weights = S[h:] * S[:n - h]
            sigma[:, h - 1] = j_inv @ (weights @ hs[h:]) / n
        d_hat = kappa ** 2 * np.eye(m) + c @ omega @ c.T + c @ sigma + sigma.T @ c.T
    else:
        sigma = None
        k4 = float(np.mean(diag.residuals ** 4))
        d_hat = d ** 2 * (k4 - 1.0) ** 2 * np.eye(m) + c @ (omega - 2.0 * (k4 - 1.0) * j_inv) @ c.T

    norm = np.linalg.norm(d_hat)
    asymmetry = float(np.linalg.norm(d_hat - d_hat.T) / norm) if norm > 0 else 0.0
    d_hat = 0.5 * (d_hat + d_hat.T)

    condition = float(np.linalg.cond(d_hat))
    if not condition <= COND_LIMIT:
        raise SingularDError(condition, order.estimated)

    return CovarianceAssembly(c, sigma, d_hat, d_hat / kappa ** 2, method, kappa, condition, asymmetry)


def portmanteau_test(assembly: CovarianceAssembly, r_hat: np.ndarray, rho_hat: np.ndarray,
                     n: int, alpha: float = 0.05) -> TestReport:
    """Statistics n r̂' D̂⁻¹ r̂ and n ρ̂' D̂_ρ⁻¹ ρ̂ with their asymptotic χ²_m p-values, and
    the ±u_α √(D̂_ρ(h,h)/n) bands of the autocorrelations, u_α being the normal
    quantile of order 1 - α.
    """

    m = assembly.m
    r_hat = np.asarray(r_hat, dtype=float)[:m]
    rho_hat = np.asarray(rho_hat, dtype=float)[:m]
    if r_hat.shape != (m,) or rho_hat.shape != (m,):
        raise ValueError(f"test: expected {m} autocovariances")

    try:
        stat_r = float(n * r_hat @ np.linalg.solve(assembly.D_hat, r_hat))
        stat_rho = float(n * rho_hat @ np.linalg.solve(assembly.D_rho_hat, rho_hat))
    except np.linalg.LinAlgError:
        raise SingularDError(float("inf"), None)

    # Rounding may give tiny negative values for a zero vector.
    stat_r = max(stat_r, 0.0)
    stat_rho = max(stat_rho, 0.0)

    u = normal_quantile(1.0 - alpha)
    half = u * np.sqrt(np.maximum(np.diag(assembly.D_rho_hat), 0.0)) / np.sqrt(n)
    bands = [(-float(w), float(w)) for w in half]

    return TestReport(m, r_hat, rho_hat, stat_r, stat_rho,
                      chi2_sf(stat_r, m), chi2_sf(stat_rho, m), bands, alpha)


def run_tests(fit: FitResult, m_max: int, alpha: float = 0.05,
              method: str = DMethod.GENERAL) -> List[TestReport]:
    """Run the test for every m = 1..m_max on a fit.
    """
    order = fit.order
    diag = residual_diagnostics(fit, order.d)
    r_hat, rho_hat = autocov_sum_sq(diag, m_max)
    reports = []
    for m in range(1, m_max + 1):
        assembly = assemble_d(order, fit, diag, fit.derivs, m, method)
        reports.append(portmanteau_test(assembly, r_hat, rho_hat, diag.n, alpha))
    return reports


class LagTooLargeError(ValueError):
    """Raised when the requested lag is not smaller than the sample size.
    """
    def __init__(self, m: int, n: int) -> None:
        self.m = m
        self.n = n

    def __str__(self) -> str:
        return f"lag {self.m} with only {self.n} observations"

class SingularDError(Exception):
    """Raised when the estimated covariance D is numerically singular. The advisory
    recalls the moment condition on the innovations, which depends on the power mode
    (None if unknown).
    """

    ADVISORY_KNOWN = "the law of η_t should take more than 3(d+1) positive values"
    ADVISORY_ESTIMATED = "the law of η_t should take more than 11d+1 positive values"

    def __init__(self, condition: float, estimated: Optional[bool]) -> None:
        self.condition = condition
        if estimated is None:
            self.advisory = None
        else:
            self.advisory = self.ADVISORY_ESTIMATED if estimated else self.ADVISORY_KNOWN

    def __str__(self) -> str:
        if self.advisory is None:
            return f"condition number {self.condition:.3g}"
        return f"condition number {self.condition:.3g} ({self.advisory})"
