"""Dense linear algebra primitives and seeded random sampling.

Matrices are plain ``numpy.ndarray`` objects with dtype float64 and
C (row-major) memory order; vectors are 1-d arrays.  The decompositions
wrap LAPACK through :mod:`numpy.linalg` behind contracts the rest of the
package relies on: deterministic QR signs, descending singular values,
orthonormal eigenvector matrices.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import RankDeficiencyError, ValidationError

__all__ = [
    "RngStream",
    "StandardNormal",
    "Uniform",
    "StudentT",
    "ChiSquare",
    "MultivariateNormal",
    "sample",
    "thin_qr",
    "svd",
    "sym_eig",
]


# --------------------------------------------------------------------------
# Random streams
# --------------------------------------------------------------------------

@dataclass
class RngStream:
    """A seeded, replayable random stream.

    Identical ``(seed, stream_id)`` pairs produce bit-identical draw
    sequences; distinct ``stream_id`` values give statistically independent
    streams (PCG64 seeded through ``SeedSequence`` spawn keys).  A stream
    advances internal state on every draw and must not be shared across
    concurrent tasks.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not 0 <= int(self.stream_id) < 2 ** 64:
            raise ValidationError(f"stream_id must be a 64-bit unsigned integer, got {self.stream_id}")
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform01(self, size) -> np.ndarray:
        return self.generator.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def integers(self, low: int, high: int, size) -> np.ndarray:
        return self.generator.integers(low, high, size=size)


# --------------------------------------------------------------------------
# Distribution specs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StandardNormal:
    pass


@dataclass(frozen=True)
class Uniform:
    low: float = 0.0
    high: float = 1.0


@dataclass(frozen=True)
class StudentT:
    dof: int


@dataclass(frozen=True)
class ChiSquare:
    dof: int


@dataclass(frozen=True)
class MultivariateNormal:
    mean: np.ndarray
    cov: np.ndarray


def _chi_square_draws(stream: RngStream, dof: int, n: int) -> np.ndarray:
    # sum of squared standard normals; raw (uncentered) draws
    z = stream.normal((n, dof))
    return np.sum(z * z, axis=1)


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValidationError(f"covariance must be square, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-10):
        raise ValidationError("covariance must be symmetric")
    values, vectors = np.linalg.eigh(cov)
    if values.min() < -1e-10 * max(1.0, values.max()):
        raise ValidationError(f"covariance is not positive semidefinite (min eigenvalue {values.min():.3e})")
    return vectors * np.sqrt(np.clip(values, 0.0, None))


def sample(stream: RngStream, dist, n: int):
    """Draw ``n`` values from ``dist`` using ``stream``.

    Scalar distributions return a length-``n`` vector; a multivariate
    normal returns an ``n x p`` matrix.  Draws are a deterministic function
    of ``(stream.seed, stream.stream_id)`` and the call sequence.
    """
    if n < 0:
        raise ValidationError(f"sample size must be nonnegative, got {n}")
    if isinstance(dist, StandardNormal):
        return stream.normal(n)
    if isinstance(dist, Uniform):
        if not dist.high > dist.low:
            raise ValidationError(f"uniform bounds must satisfy low < high, got ({dist.low}, {dist.high})")
        return dist.low + (dist.high - dist.low) * stream.uniform01(n)
    if isinstance(dist, StudentT):
        if dist.dof <= 0 or int(dist.dof) != dist.dof:
            raise ValidationError(f"student-t degrees of freedom must be a positive integer, got {dist.dof}")
        z = stream.normal(n)
        chi = _chi_square_draws(stream, int(dist.dof), n)
        return z / np.sqrt(chi / dist.dof)
    if isinstance(dist, ChiSquare):
        if dist.dof <= 0 or int(dist.dof) != dist.dof:
            raise ValidationError(f"chi-square degrees of freedom must be a positive integer, got {dist.dof}")
        return _chi_square_draws(stream, int(dist.dof), n)
    if isinstance(dist, MultivariateNormal):
        mean = np.asarray(dist.mean, dtype=np.float64).ravel()
        factor = _psd_factor(dist.cov)
        if factor.shape[0] != mean.shape[0]:
            raise ValidationError("mean and covariance dimensions differ")
        z = stream.normal((n, mean.shape[0]))
        return mean + z @ factor.T
    raise ValidationError(f"unknown distribution spec: {dist!r}")


# --------------------------------------------------------------------------
# Decompositions
# --------------------------------------------------------------------------

def thin_qr(a: np.ndarray, rank_tol: float = 1e-12):
    """Thin QR with a deterministic sign convention.

    Returns ``(q, r)`` with ``a = q @ r``, ``q.T @ q = I`` and ``r`` upper
    triangular with strictly positive diagonal.  The positive diagonal makes
    the factorization unique, so downstream retractions are deterministic
    functions of their input.

    Raises
    ------
    RankDeficiencyError
        If a diagonal entry of ``r`` is numerically zero; the error names
        the first deficient column.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValidationError(f"expected a matrix, got ndim={a.ndim}")
    p, d = a.shape
    if p < d:
        raise ValidationError(f"thin QR needs rows >= cols, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("QR input contains non-finite entries")
    q, r = np.linalg.qr(a, mode="reduced")
    diag = np.diagonal(r).copy()
    scale = max(1.0, float(np.abs(diag).max(initial=0.0)))
    small = np.abs(diag) <= rank_tol * scale
    if small.any():
        raise RankDeficiencyError(int(np.argmax(small)))
    signs = np.where(diag < 0, -1.0, 1.0)
    return q * signs, r * signs[:, None]


def svd(a: np.ndarray):
    """Thin singular value decomposition ``a = u @ diag(s) @ v.T``.

    ``s`` is descending and nonnegative; ``u`` and ``v`` have orthonormal
    columns (``k = min(m, n)`` of them).
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValidationError(f"expected a matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("SVD input contains non-finite entries")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    return u, s, vh.T


def sym_eig(a: np.ndarray, by_magnitude: bool = False):
    """Eigendecomposition of a symmetric matrix.

    Returns ``(values, vectors)`` with ``a @ vectors = vectors @ diag(values)``
    and orthonormal ``vectors``.  Values are sorted descending, by signed
    value by default or by absolute value when ``by_magnitude`` is set.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("eigendecomposition input contains non-finite entries")
    asym = np.linalg.norm(a - a.T) / max(1.0, np.linalg.norm(a))
    if asym >= 1e-10:
        raise ValidationError(f"matrix is not symmetric (relative asymmetry {asym:.3e})")
    values, vectors = np.linalg.eigh(0.5 * (a + a.T))
    key = -np.abs(values) if by_magnitude else -values
    order = np.argsort(key, kind="stable")
    return values[order], vectors[:, order]
