"""Small numeric kernels used by every other module: symmetric square root and inverse
of positive definite matrices, chi-square tail, normal quantile and the seeded gaussian
streams used for simulation.
"""

from scipy.special import gammaincc, gammainc, ndtri
import numpy as np

from typing import Union


__all__ = [
    "SymFactors", "sym_sqrt_inv", "sym_sqrt_inv_stack", "chi2_sf", "chi2_cdf",
    "normal_quantile", "RngStream", "draw_std_normal",
    "NotPositiveDefiniteError", "DomainError",
]


EPS_PD = 1e-10
SYM_TOL = 1e-12


class SymFactors:
    """Spectral factors of a symmetric positive definite matrix, or of a stack of such
    matrices when produced by `sym_sqrt_inv_stack` (leading axis is then the stack).
    """

    __slots__ = "sqrt", "inv_sqrt", "inv", "logdet"

    def __init__(self, sqrt: np.ndarray, inv_sqrt: np.ndarray, inv: np.ndarray, logdet: Union[float, np.ndarray]) -> None:
        self.sqrt = sqrt
        self.inv_sqrt = inv_sqrt
        self.inv = inv
        self.logdet = logdet


def sym_sqrt_inv(m: np.ndarray) -> SymFactors:
    """Compute the symmetric (spectral) square root of a positive definite matrix, the
    inverse of that root, the inverse and the log-determinant.

    :param m: A symmetric matrix, symmetric within 1e-12 relative.
    :raises NotPositiveDefiniteError: If an eigenvalue is below 1e-10 times the largest
    diagonal entry.
    :return: The factors, all symmetric.
    """

    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix: expected a square matrix, got shape {m.shape}")

    factors = sym_sqrt_inv_stack(m[None])
    return SymFactors(factors.sqrt[0], factors.inv_sqrt[0], factors.inv[0], float(factors.logdet[0]))


def sym_sqrt_inv_stack(ms: np.ndarray) -> SymFactors:
    """Same as `sym_sqrt_inv` but for a stack of matrices of shape (n, d, d), using a
    single batched eigendecomposition.
    """

    ms = np.asarray(ms, dtype=float)
    if ms.ndim != 3 or ms.shape[1] != ms.shape[2]:
        raise ValueError(f"matrices: expected shape (n, d, d), got {ms.shape}")

    scale = np.max(np.abs(ms), axis=(1, 2))
    asym = np.max(np.abs(ms - np.swapaxes(ms, 1, 2)), axis=(1, 2))
    if np.any(asym > SYM_TOL * np.maximum(scale, 1.0)):
        raise ValueError("matrix: not symmetric")

    values, vectors = np.linalg.eigh(ms)
    threshold = EPS_PD * np.max(np.diagonal(ms, axis1=1, axis2=2), axis=1)
    bad = values[:, 0] < threshold
    if np.any(bad):
        raise NotPositiveDefiniteError(float(values[np.argmax(bad), 0]))

    root = np.sqrt(values)
    vt = np.swapaxes(vectors, 1, 2)
    sqrt = (vectors * root[:, None, :]) @ vt
    inv_sqrt = (vectors / root[:, None, :]) @ vt
    inv = (vectors / values[:, None, :]) @ vt
    logdet = np.sum(np.log(values), axis=1)

    return SymFactors(sqrt, inv_sqrt, inv, logdet)


def chi2_sf(x: float, m: int) -> float:
    """Survival function P(χ²_m > x), through the regularized upper incomplete gamma
    function Q(m/2, x/2).
    """
    if m < 1:
        raise DomainError("m", m)
    if not x >= 0:
        raise DomainError("x", x)
    return float(gammaincc(m / 2.0, x / 2.0))


def chi2_cdf(x: float, m: int) -> float:
    """Cumulative distribution P(χ²_m ≤ x), complement of `chi2_sf`.
    """
    if m < 1:
        raise DomainError("m", m)
    if not x >= 0:
        raise DomainError("x", x)
    return float(gammainc(m / 2.0, x / 2.0))


def normal_quantile(p: float) -> float:
    """Quantile of order p of the standard normal distribution.
    """
    if not 0.0 < p < 1.0:
        raise DomainError("p", p)
    return float(ndtri(p))


class RngStream:
    """A reproducible gaussian stream identified by a base seed and a stream id (the
    replication index). Streams sharing a seed but with distinct ids are independent
    because they are spawned from the same seed sequence with distinct spawn keys.

    The stream is stateful: successive draws continue the sequence. It must be owned by
    a single caller at a time.
    """

    __slots__ = "seed", "stream_id", "generator"

    def __init__(self, seed: int, stream_id: int = 0) -> None:
        if seed < 0 or stream_id < 0:
            raise ValueError("rng: seed and stream id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def __repr__(self) -> str:
        return f"<RngStream seed={self.seed} stream={self.stream_id}>"


def draw_std_normal(rng: RngStream, count: int) -> np.ndarray:
    """Draw `count` independent standard normal variates from the stream.
    """
    if count < 1:
        raise ValueError(f"count: must be positive, got {count}")
    return rng.generator.standard_normal(count)


class NotPositiveDefiniteError(Exception):
    """Raised when a matrix expected positive definite has an eigenvalue below the
    tolerance. The smallest eigenvalue is given.
    """
    def __init__(self, min_eigenvalue: float) -> None:
        self.min_eigenvalue = min_eigenvalue

    def __str__(self) -> str:
        return f"minimum eigenvalue {self.min_eigenvalue!r}"

class DomainError(ValueError):
    """Raised when a statistical function is called outside of its domain.
    """
    def __init__(self, name: str, value: float) -> None:
        self.name = name
        self.value = value

    def __str__(self) -> str:
        return f"{self.name}: {self.value!r} is outside the domain"
