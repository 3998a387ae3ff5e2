"""Subspace comparison metrics.

All estimators in this package return orthonormal bases; the functions here
compare them in basis-invariant ways: projection-matrix Frobenius distance,
orthogonal Procrustes alignment residuals, and cosine diagnostics.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .numerics import svd

__all__ = [
    "check_basis",
    "projection",
    "proj_distance",
    "procrustes_distance",
    "cosine_to_subspace",
    "SubspaceDistanceReport",
]


def check_basis(B: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Validate that ``B`` is a p x d matrix with orthonormal columns."""
    B = np.asarray(B, dtype=np.float64)
    if B.ndim == 1:
        B = B[:, None]
    if B.ndim != 2:
        raise ValidationError(f"basis must be a matrix, got ndim={B.ndim}")
    p, d = B.shape
    if not 1 <= d <= p:
        raise ValidationError(f"basis must satisfy 1 <= d <= p, got shape {B.shape}")
    err = np.linalg.norm(B.T @ B - np.eye(d))
    if not err < tol:
        raise ValidationError(f"basis columns are not orthonormal (||B'B - I|| = {err:.3e})")
    return B


def projection(B: np.ndarray) -> np.ndarray:
    """Orthogonal projection matrix ``B @ B.T`` onto span(B)."""
    B = check_basis(B)
    return B @ B.T


def proj_distance(B1: np.ndarray, B2: np.ndarray) -> float:
    """Frobenius distance between the projection matrices of two bases.

    Basis-invariant, symmetric, and a metric on subspaces; the two bases may
    have different column counts but must share ``p``.
    """
    B1 = check_basis(B1)
    B2 = check_basis(B2)
    if B1.shape[0] != B2.shape[0]:
        raise ValidationError(f"bases live in different ambient dimensions: {B1.shape[0]} vs {B2.shape[0]}")
    return float(np.linalg.norm(B1 @ B1.T - B2 @ B2.T))


@dataclass(frozen=True)
class SubspaceDistanceReport:
    """Procrustes alignment of one basis onto another.

    ``aligning_Q`` minimizes ``||B0 - B Q||_F`` over orthogonal ``Q``; the
    residual is reported under both the Frobenius and spectral norms.
    """

    proj_frobenius: float
    procrustes_frobenius: float
    procrustes_spectral: float
    aligning_Q: np.ndarray


def procrustes_distance(B: np.ndarray, B0: np.ndarray) -> SubspaceDistanceReport:
    """Align ``B`` onto ``B0`` over orthogonal rotations and report residuals.

    The closed-form minimizer of the Frobenius problem is ``Q = U V.T`` from
    the SVD of ``B.T @ B0``.  Both residual norms are zero exactly when the
    two spans coincide.
    """
    B = check_basis(B)
    B0 = check_basis(B0)
    if B.shape != B0.shape:
        raise ValidationError(f"procrustes distance needs equal shapes, got {B.shape} vs {B0.shape}")
    u, _, v = svd(B.T @ B0)
    q = u @ v.T
    residual = B0 - B @ q
    return SubspaceDistanceReport(
        proj_frobenius=proj_distance(B, B0),
        procrustes_frobenius=float(np.linalg.norm(residual)),
        procrustes_spectral=float(np.linalg.norm(residual, 2)),
        aligning_Q=q,
    )


def cosine_to_subspace(v: np.ndarray, B: np.ndarray) -> float:
    """Absolute cosine between a vector and its projection onto span(B).

    Equal to ``||B.T v|| / ||v||``; 1 when ``v`` lies in the span, 0 when it
    is orthogonal to it.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    norm = np.linalg.norm(v)
    if not norm > 0:
        raise ValidationError("cannot take the cosine of a zero vector")
    B = check_basis(B)
    if B.shape[0] != v.shape[0]:
        raise ValidationError(f"vector length {v.shape[0]} does not match basis rows {B.shape[0]}")
    return float(min(1.0, np.linalg.norm(B.T @ v) / norm))
