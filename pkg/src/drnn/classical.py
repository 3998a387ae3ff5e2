"""Classical sufficient dimension reduction baselines.

Four moment- and regression-based estimators of the central (mean)
subspace: sliced inverse regression, sliced average variance estimation,
principal Hessian directions, and minimum average variance estimation.
Each one centers and whitens the predictors internally, estimates
directions in the whitened scale, and maps the result back to the
original coordinates as an orthonormal basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BandwidthError,
    EmptyDataError,
    ValidationError,
    WhiteningError,
)
from .numerics import sym_eig, thin_qr

_EIG_FLOOR = 1e-10
_ANCHOR_BLOCK = 256


@dataclass(frozen=True)
class SliceSpec:
    """Number of response slices used by the sliced estimators."""

    n_slices: int = 10

    def validate(self) -> None:
        if self.n_slices < 2:
            raise ValidationError(f"n_slices must be >= 2, got {self.n_slices}")


@dataclass(frozen=True)
class MaveConfig:
    max_iter: int = 25
    bandwidth_multiplier: float = 2.34
    tol: float = 1e-4

    def validate(self) -> None:
        if self.max_iter < 1:
            raise ValidationError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.bandwidth_multiplier > 0:
            raise ValidationError("bandwidth_multiplier must be positive")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")


def _check_inputs(X, y, d):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError(f"X must be a matrix, got ndim={X.ndim}")
    n, p = X.shape
    if n == 0 or p == 0:
        raise EmptyDataError(f"X has shape {X.shape}")
    if y.shape != (n,):
        raise ValidationError(f"y must have shape ({n},), got {y.shape}")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValidationError("inputs contain non-finite entries")
    if not 1 <= d <= p:
        raise ValidationError(f"d must be in [1, {p}], got {d}")
    return X, y, n, p


def _whiten(X):
    """Center X and whiten by the symmetric inverse square root of cov."""
    mu = X.mean(axis=0)
    Xc = X - mu
    cov = (Xc.T @ Xc) / (len(X) - 1)
    vals, vecs = sym_eig(cov)
    if vals[-1] <= _EIG_FLOOR:
        raise WhiteningError(
            f"sample covariance is numerically singular (min eigenvalue {vals[-1]:.3e})"
        )
    inv_sqrt = vecs @ np.diag(vals ** -0.5) @ vecs.T
    return Xc @ inv_sqrt, inv_sqrt


def _back_transform(directions, inv_sqrt):
    """Map whitened-scale directions to original coordinates, orthonormal."""
    q, _ = thin_qr(inv_sqrt @ directions)
    return q


def _slice_indices(y, n_slices):
    """Partition row indices into near-equal groups by sorted response.

    Ties are broken by original row index (stable sort), so the grouping
    is a deterministic function of the data.
    """
    order = np.argsort(y, kind="stable")
    return np.array_split(order, n_slices)


def _save_matrix(Z, y, groups):
    n, p = Z.shape
    eye = np.eye(p)
    M = np.zeros((p, p))
    for idx in groups:
        Zh = Z[idx]
        centered = Zh - Zh.mean(axis=0)
        Vh = (centered.T @ centered) / (len(idx) - 1)
        diff = eye - Vh
        M += (len(idx) / n) * (diff @ diff)
    return M


def _sir_matrix(Z, y, n_slices):
    n, p = Z.shape
    M = np.zeros((p, p))
    for idx in _slice_indices(y, n_slices):
        mean = Z[idx].mean(axis=0)
        M += (len(idx) / n) * np.outer(mean, mean)
    return M


def sir(X, y, d, slices: SliceSpec | None = None):
    """Sliced inverse regression basis estimate.

    Slices the data by response, averages the whitened predictors within
    each slice, and extracts the top eigenvectors of the weighted
    second-moment matrix of those slice means.
    """
    X, y, n, p = _check_inputs(X, y, d)
    spec = slices if slices is not None else SliceSpec()
    spec.validate()
    if spec.n_slices > n // 2:
        raise ValidationError(f"n_slices={spec.n_slices} exceeds n/2={n // 2}")
    if n < 4 * spec.n_slices:
        raise ValidationError(
            f"need n >= {4 * spec.n_slices} for {spec.n_slices} slices, got n={n}"
        )
    Z, inv_sqrt = _whiten(X)
    _, vecs = sym_eig(_sir_matrix(Z, y, spec.n_slices))
    return _back_transform(vecs[:, :d], inv_sqrt)


def sir_spectrum(X, y, slices: SliceSpec | None = None) -> np.ndarray:
    """Eigenvalues (descending) of the SIR candidate matrix."""
    X, y, n, p = _check_inputs(X, y, 1)
    spec = slices if slices is not None else SliceSpec()
    spec.validate()
    if n < 4 * spec.n_slices:
        raise ValidationError(
            f"need n >= {4 * spec.n_slices} for {spec.n_slices} slices, got n={n}"
        )
    Z, _ = _whiten(X)
    vals, _ = sym_eig(_sir_matrix(Z, y, spec.n_slices))
    return vals


def default_save_slices(n: int, p: int) -> SliceSpec:
    return SliceSpec(max(5, min(10, n // (2 * p))))


def save(X, y, d, slices: SliceSpec | None = None):
    """Sliced average variance estimation basis estimate.

    Compares within-slice covariances of the whitened predictors against
    the identity; unlike the slice-mean statistic this picks up purely
    second-moment (symmetric) dependence.
    """
    X, y, n, p = _check_inputs(X, y, d)
    spec = slices if slices is not None else default_save_slices(n, p)
    spec.validate()
    if spec.n_slices > n // 2:
        raise ValidationError(f"n_slices={spec.n_slices} exceeds n/2={n // 2}")
    groups = _slice_indices(y, spec.n_slices)
    smallest = min(len(g) for g in groups)
    if smallest < p + 1:
        raise ValidationError(
            f"slice of size {smallest} is below p+1={p + 1}; use fewer slices"
        )
    Z, inv_sqrt = _whiten(X)
    _, vecs = sym_eig(_save_matrix(Z, y, groups))
    return _back_transform(vecs[:, :d], inv_sqrt)


def phd(X, y, d):
    """Principal Hessian directions basis estimate.

    Eigenvectors (by eigenvalue magnitude) of the response-weighted
    second moment of the whitened predictors, which estimates the average
    Hessian of the regression function.
    """
    X, y, n, p = _check_inputs(X, y, d)
    if n <= p:
        raise ValidationError(f"need n > p, got n={n}, p={p}")
    Z, inv_sqrt = _whiten(X)
    resid = y - y.mean()
    M = (Z.T * resid) @ Z / n
    _, vecs = sym_eig(M, by_magnitude=True)
    return _back_transform(vecs[:, :d], inv_sqrt)


def phd_spectrum(X, y) -> np.ndarray:
    """Eigenvalues (descending magnitude) of the PHD candidate matrix."""
    X, y, n, p = _check_inputs(X, y, 1)
    if n <= p:
        raise ValidationError(f"need n > p, got n={n}, p={p}")
    Z, _ = _whiten(X)
    resid = y - y.mean()
    vals, _ = sym_eig((Z.T * resid) @ Z / n, by_magnitude=True)
    return vals


# ---------------------------------------------------------------------------
# Minimum average variance estimation
# ---------------------------------------------------------------------------

def _median_pairwise(T):
    n = len(T)
    sq = np.maximum(
        np.sum(T * T, axis=1)[:, None]
        + np.sum(T * T, axis=1)[None, :]
        - 2.0 * (T @ T.T),
        0.0,
    )
    return float(np.median(np.sqrt(sq[np.triu_indices(n, k=1)])))


def _mave_bandwidth(T, d, c):
    """Kernel bandwidth from the median pairwise distance of projections."""
    n = len(T)
    h = c * n ** (-1.0 / (d + 4)) * _median_pairwise(T)
    if not np.isfinite(h) or h <= 0:
        raise BandwidthError(
            f"degenerate bandwidth {h!r}; projected points may be coincident"
        )
    return h


def _mave_weights(T, h):
    """Row-normalized Gaussian kernel weights on projected distances."""
    sq = np.maximum(
        np.sum(T * T, axis=1)[:, None]
        + np.sum(T * T, axis=1)[None, :]
        - 2.0 * (T @ T.T),
        0.0,
    )
    W = np.exp(-sq / (2.0 * h * h))
    rows = W.sum(axis=1)
    if not np.all(rows > 0) or not np.all(np.isfinite(W)):
        raise BandwidthError("kernel weight matrix is degenerate")
    return W / rows[:, None]


def _local_linear_fits(y, T, W):
    """Per-anchor weighted linear fits of y on projected offsets.

    Returns intercepts a (n,) and slopes b (n, d) of the locally linear
    model around each anchor point, solved as one batched system.
    """
    n, d = T.shape
    a = np.empty(n)
    b = np.empty((n, d))
    for start in range(0, n, _ANCHOR_BLOCK):
        blk = slice(start, min(start + _ANCHOR_BLOCK, n))
        D = T[None, :, :] - T[blk][:, None, :]
        Wb = W[blk]
        m = blk.stop - blk.start
        G = np.empty((m, d + 1, d + 1))
        G[:, 0, 0] = Wb.sum(axis=1)
        G[:, 0, 1:] = np.einsum("ij,ijk->ik", Wb, D)
        G[:, 1:, 0] = G[:, 0, 1:]
        G[:, 1:, 1:] = np.einsum("ij,ijk,ijl->ikl", Wb, D, D)
        rhs = np.empty((m, d + 1))
        rhs[:, 0] = Wb @ y
        rhs[:, 1:] = np.einsum("ij,ijk->ik", Wb * y[None, :], D)
        G[:, np.arange(d + 1), np.arange(d + 1)] += 1e-10
        sol = np.linalg.solve(G, rhs[..., None])[..., 0]
        a[blk] = sol[:, 0]
        b[blk] = sol[:, 1:]
    return a, b


def _mave_objective(y, T, W, a, b):
    obj = 0.0
    n = len(y)
    for start in range(0, n, _ANCHOR_BLOCK):
        blk = slice(start, min(start + _ANCHOR_BLOCK, n))
        D = T[None, :, :] - T[blk][:, None, :]
        pred = a[blk][:, None] + np.einsum("ijk,ik->ij", D, b[blk])
        obj += float(np.einsum("ij,ij->", W[blk], (y[None, :] - pred) ** 2))
    return obj / n


def _update_basis(Z, y, W, a, b, p, d):
    """Minimize the weighted loss over the projection with fits fixed.

    The normal matrix separates over anchors because each anchor's slope
    is constant across partners, leaving a sum of Kronecker products.
    """
    n = len(y)
    A = np.zeros((d, p, d, p))
    rhs = np.zeros((d, p))
    for start in range(0, n, _ANCHOR_BLOCK):
        blk = slice(start, min(start + _ANCHOR_BLOCK, n))
        delta = Z[None, :, :] - Z[blk][:, None, :]
        Wb = W[blk]
        C = np.einsum("ij,ija,ijb->iab", Wb, delta, delta)
        resid = Wb * (y[None, :] - a[blk][:, None])
        g = np.einsum("ij,ija->ia", resid, delta)
        bb = b[blk]
        A += np.einsum("ik,il,iab->kalb", bb, bb, C)
        rhs += np.einsum("ik,ia->ka", bb, g)
    A = A.reshape(d * p, d * p)
    A[np.diag_indices(d * p)] += 1e-10
    vec = np.linalg.solve(A, rhs.reshape(d * p))
    return vec.reshape((d, p)).T


def mave(X, y, d, config: MaveConfig | None = None, return_trace: bool = False):
    """Minimum average variance estimation basis estimate.

    Alternates between local linear fits in the current projected
    coordinates and a global least-squares update of the projection,
    shrinking the kernel bandwidth toward the projected space as the
    estimate refines.  The slice-free objective handles links that defeat
    the sliced moment methods, at much higher cost.

    With ``return_trace`` the per-iteration objective values are returned
    alongside the basis; the trace is non-increasing.
    """
    X, y, n, p = _check_inputs(X, y, d)
    cfg = config if config is not None else MaveConfig()
    cfg.validate()
    if n <= p + d:
        raise ValidationError(f"need n > p + d = {p + d}, got n={n}")
    Z, inv_sqrt = _whiten(X)

    B = _mave_init(Z, y, d, cfg.bandwidth_multiplier)
    prev_obj = np.inf
    trace: list[float] = []
    for _ in range(cfg.max_iter):
        T = Z @ B
        h = _mave_bandwidth(T, d, cfg.bandwidth_multiplier)
        W = _mave_weights(T, h)
        a, b = _local_linear_fits(y, T, W)
        B_new, _ = thin_qr(_update_basis(Z, y, W, a, b, p, d))
        T_new = Z @ B_new
        a_new, b_new = _local_linear_fits(y, T_new, W)
        obj = _mave_objective(y, T_new, W, a_new, b_new)
        # A refreshed bandwidth can push the objective up; keep the previous
        # basis and stop rather than accept a worse fit.
        if obj > prev_obj:
            break
        trace.append(obj)
        drift = np.linalg.norm(B_new @ B_new.T - B @ B.T)
        B = B_new
        prev_obj = obj
        if drift < cfg.tol:
            break
    basis = _back_transform(B, inv_sqrt)
    if return_trace:
        return basis, trace
    return basis


def _mave_init(Z, y, d, c):
    """Warm start for the alternating loop.

    Local linear slopes carry no signal at a symmetric link, so the
    gradient outer-product start can be arbitrarily bad there.  The
    second-moment slice statistic has no such blind spot; use it whenever
    the slices are large enough and fall back to gradients otherwise.
    """
    n, p = Z.shape
    groups = _slice_indices(y, default_save_slices(n, p).n_slices)
    if min(len(g) for g in groups) >= p + 1:
        _, vecs = sym_eig(_save_matrix(Z, y, groups))
        return vecs[:, :d]
    return _opg_init(Z, y, d, c)


def _opg_init(Z, y, d, c):
    """Outer product of gradients start: average local slopes in full space."""
    n, p = Z.shape
    h = _mave_bandwidth(Z, p, c)
    W = _mave_weights(Z, h)
    _, b = _local_linear_fits(y, Z, W)
    M = (b.T @ b) / n
    _, vecs = sym_eig(M)
    return vecs[:, :d]
