"""Central-subspace estimation from kernel-smoothed response indicators.

Mean regression recovers directions that move the conditional mean, and
misses directions that only modulate noise.  Here the network instead
predicts the kernel density signal K_h(y_j - y_i) from (B'x_j, y_i) over
ordered sample pairs, so any dependence of the conditional law of y on
B'x is visible to the loss, not just its mean.  The architecture and the
orthonormal first-layer constraint are shared with the mean-regression
trainer; only the loss and the pair-sampling scheme differ.
"""

import math
from dataclasses import dataclass

import numpy as np

from .datagen import Dataset
from .errors import (DegenerateColumnError, DivergenceError, RankDeficiencyError,
                     ValidationError)
from .metrics import check_basis
from .network import (FitResult, Layer, Model, TrainConfig, _gram_schmidt_repair,
                      _uniform_layer, backward_chain, default_width, forward_chain,
                      make_slot, stiefel_step, uniform_chain)
from .numerics import RngStream, thin_qr

__all__ = [
    "KernelConfig",
    "PairBatchPlan",
    "gaussian_kernel",
    "silverman_bandwidth",
    "pair_loss",
    "density_forward",
    "train_central_subspace",
]

# pairs per evaluation block; bounds memory for full n^2 sums
_PAIR_BLOCK = 131072


def gaussian_kernel(u, h: float):
    """Gaussian density with scale ``h`` evaluated at ``u`` (vectorized)."""
    if not h > 0:
        raise ValidationError(f"bandwidth must be positive, got {h}")
    u = np.asarray(u, dtype=np.float64)
    out = np.exp(-(u * u) / (2.0 * h * h)) / (h * math.sqrt(2.0 * math.pi))
    return float(out) if out.ndim == 0 else out


def silverman_bandwidth(y: np.ndarray) -> float:
    """Rule-of-thumb bandwidth 1.06 * sd(y) * n^(-1/5)."""
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] < 2:
        raise ValidationError(f"need at least 2 observations, got {y.shape[0]}")
    sd = float(y.std(ddof=1))
    if not sd > 0:
        raise DegenerateColumnError("response is constant; no bandwidth exists")
    return 1.06 * sd * y.shape[0] ** (-0.2)


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel with a fixed or data-driven bandwidth."""

    bandwidth: float | str = "silverman"

    def resolve(self, y: np.ndarray) -> float:
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "silverman":
                raise ValidationError(
                    f"bandwidth must be a positive number or 'silverman', got {self.bandwidth!r}"
                )
            return silverman_bandwidth(y)
        h = float(self.bandwidth)
        if not h > 0:
            raise ValidationError(f"bandwidth must be positive, got {h}")
        return h


@dataclass(frozen=True)
class PairBatchPlan:
    """Stochastic pair-sampling schedule for the quadratic double sum."""

    batch_pairs: int = 4096
    iterations: int | None = None  # None: use the trainer config's count

    def validate(self) -> None:
        if self.batch_pairs < 1:
            raise ValidationError(f"batch_pairs must be >= 1, got {self.batch_pairs}")
        if self.iterations is not None and self.iterations < 1:
            raise ValidationError(f"iterations must be >= 1, got {self.iterations}")


def _dense_layers(model) -> list[Layer]:
    if isinstance(model, Model):
        return model.layers
    return list(model)


def density_forward(model, B: np.ndarray, X: np.ndarray, y_cond: np.ndarray) -> np.ndarray:
    """Evaluate f(B'x, y) for rows of ``X`` paired with conditioning values."""
    layers = _dense_layers(model)
    B = check_basis(B)
    X = np.asarray(X, dtype=np.float64)
    y_cond = np.asarray(y_cond, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[1] != B.shape[0]:
        raise ValidationError(f"X must be n x {B.shape[0]}, got shape {X.shape}")
    if X.shape[0] != y_cond.shape[0]:
        raise ValidationError("X and the conditioning values disagree on the sample count")
    if layers[0].W.shape[0] != B.shape[1] + 1:
        raise ValidationError(
            f"model expects {layers[0].W.shape[0]} inputs but the basis provides "
            f"{B.shape[1]} plus one conditioning value"
        )
    inputs = np.column_stack([X @ B, y_cond])
    out, _ = forward_chain(layers, inputs)
    return out


def pair_loss(model, B: np.ndarray, X: np.ndarray, y: np.ndarray,
              kernel: KernelConfig = KernelConfig(),
              pair_index_set: np.ndarray | None = None) -> float:
    """Mean of [K_h(y_j - y_i) - f(B'x_j, y_i)]^2 over ordered pairs (i, j).

    ``pair_index_set`` is an (m, 2) integer array of (i, j) pairs; ``None``
    means all n^2 ordered pairs.  Evaluation is blocked, so the full double
    sum stays within fixed memory.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValidationError("X and y disagree on the sample count")
    n = y.shape[0]
    h = kernel.resolve(y)
    if pair_index_set is None:
        total = n * n
        def pairs_of(start, stop):
            k = np.arange(start, stop)
            return k // n, k % n
    else:
        pair_index_set = np.asarray(pair_index_set)
        if pair_index_set.ndim != 2 or pair_index_set.shape[1] != 2:
            raise ValidationError("pair_index_set must be an (m, 2) integer array")
        if pair_index_set.size and (pair_index_set.min() < 0 or pair_index_set.max() >= n):
            raise ValidationError("pair indices out of range")
        total = pair_index_set.shape[0]
        if total == 0:
            raise ValidationError("pair_index_set is empty")
        def pairs_of(start, stop):
            block = pair_index_set[start:stop]
            return block[:, 0], block[:, 1]
    acc = 0.0
    for start in range(0, total, _PAIR_BLOCK):
        i, j = pairs_of(start, min(start + _PAIR_BLOCK, total))
        target = gaussian_kernel(y[j] - y[i], h)
        pred = density_forward(model, B, X[j], y[i])
        diff = pred - target
        acc += float(diff @ diff)
    return acc / total


def train_central_subspace(data: Dataset, d: int,
                           kernel: KernelConfig = KernelConfig(),
                           config: TrainConfig = TrainConfig(),
                           plan: PairBatchPlan = PairBatchPlan()) -> FitResult:
    """Fit the pairwise kernel loss over an orthonormal x-basis.

    Each step draws ``plan.batch_pairs`` ordered pairs uniformly with
    replacement and takes one optimizer step; the basis applies to the x
    part only, with the conditioning response appended to the projected
    features.  Warm phase, retraction schedule, restarts, and the final
    exact rescaling to raw coordinates follow the mean-regression trainer.
    The returned ``final_train_mse`` is the full n^2 pair loss.
    """
    config.validate()
    plan.validate()
    n, p = data.X.shape
    if not 1 <= d <= p:
        raise ValidationError(f"need 1 <= d <= p, got d={d}, p={p}")
    iterations = plan.iterations if plan.iterations is not None else config.iterations
    h_width = config.h_override if config.h_override is not None else default_width(n)

    mu = data.X.mean(axis=0)
    sd = data.X.std(axis=0, ddof=1) if n > 1 else np.ones(p)
    sd = np.where(sd > 1e-12 * np.maximum(1.0, np.abs(mu)), sd, 1.0)
    Xs = (data.X - mu) / sd
    y_mu = float(data.y.mean())
    y_sd = float(data.y.std(ddof=1)) if n > 1 else 1.0
    if not y_sd > 0:
        raise DegenerateColumnError("response is constant")
    ys = (data.y - y_mu) / y_sd

    # the kernel target is computed on the standardized response, so the
    # raw-scale bandwidth shrinks by the response scale and the fitted
    # surface is multiplied back by it at the end
    h_raw = kernel.resolve(data.y)
    h_std = h_raw / y_sd

    best: FitResult | None = None
    best_loss = np.inf
    diverged = 0
    last_err: DivergenceError | None = None
    for s in range(config.restarts):
        st = RngStream(config.seed, 100 + s)
        W0 = _uniform_layer(st, p, d, bias=False, relu=False).W
        dense = uniform_chain([d + 1, h_width, h_width // 2, 1], st)
        try:
            result = _optimize_pairs(W0, dense, Xs, ys, h_std, iterations,
                                     plan.batch_pairs, config,
                                     RngStream(config.seed, 200 + s))
        except DivergenceError as err:
            diverged += 1
            last_err = err
            continue
        if result.final_train_mse < best_loss:
            best_loss = result.final_train_mse
            best = result
            best_selected = s
    if best is None:
        raise last_err
    out = _pairs_to_raw(best, data, mu, sd, y_mu, y_sd, kernel)
    out.selected_restart = best_selected
    out.diverged_restarts = diverged
    return out


def _optimize_pairs(W0, dense, Xs, ys, h_std, iterations, batch_pairs,
                    config: TrainConfig, pair_stream: RngStream) -> FitResult:
    n = Xs.shape[0]
    d = W0.shape[1]
    cut = int(round(config.warm_fraction * iterations))
    w0_slot = make_slot(config.optimizer, W0.shape)
    slots = [
        (make_slot(config.optimizer, l.W.shape), make_slot(config.optimizer, l.b.shape))
        for l in dense
    ]
    trace = np.empty(iterations)
    warnings = 0
    stiefel_residual = 0.0
    constrained = False
    # overflow in a diverging restart is expected; the finiteness checks
    # below turn it into DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(iterations):
            if it >= cut and not constrained:
                W0, warned = _snap(W0, dense)
                warnings += warned
                w0_slot = make_slot(config.optimizer, W0.shape)
                constrained = True
            i = pair_stream.integers(0, n, batch_pairs)
            j = pair_stream.integers(0, n, batch_pairs)
            target = np.exp(-((ys[j] - ys[i]) ** 2) / (2.0 * h_std * h_std)) \
                / (h_std * math.sqrt(2.0 * math.pi))
            Xb = Xs[j]
            inputs = np.column_stack([Xb @ W0, ys[i]])
            yhat, caches = forward_chain(dense, inputs)
            if not np.all(np.isfinite(yhat)):
                raise DivergenceError(it, trace[:it])
            resid = yhat - target
            loss = float(resid @ resid) / batch_pairs
            if not np.isfinite(loss):
                raise DivergenceError(it, trace[:it])
            trace[it] = loss
            grads, dinput = backward_chain(dense, caches, (2.0 / batch_pairs) * resid)
            dW0 = Xb.T @ dinput[:, :d]
            lr = config.learning_rate * (0.5 * (1.0 + math.cos(math.pi * it / iterations))
                                         if config.cosine_decay else 1.0)
            if constrained:
                W0, warned = stiefel_step(W0, dW0, w0_slot, lr)
                warnings += warned
                gram = W0.T @ W0
                defect = float(np.linalg.norm(gram - np.eye(d)))
                stiefel_residual = max(stiefel_residual, defect)
            else:
                W0 = w0_slot.update(W0, dW0, lr)
            for layer, (dw, db), (w_slot, b_slot) in zip(dense, grads, slots):
                layer.W = w_slot.update(layer.W, dw, lr)
                layer.b = b_slot.update(layer.b, db, lr)
    if not constrained:
        W0, warned = _snap(W0, dense)
        warnings += warned
    model = Model(basis=W0, layers=[l.copy() for l in dense], extra_inputs=1)
    full = pair_loss(model, W0, Xs, ys, KernelConfig(bandwidth=h_std))
    return FitResult(model=model, basis=W0, loss_trace=trace, final_train_mse=full,
                     retraction_warnings=warnings, stiefel_max_residual=stiefel_residual)


def _snap(W0, dense) -> tuple[np.ndarray, int]:
    """Orthonormalize the x-basis in place of the warm ambient matrix.

    The triangular factor moves into the x rows of the first dense layer,
    so the represented function does not change.
    """
    try:
        q, r = thin_qr(W0)
        warned = 0
    except RankDeficiencyError:
        q, warned = _gram_schmidt_repair(W0)
        r = q.T @ W0
    d = W0.shape[1]
    dense[0].W = np.vstack([r @ dense[0].W[:d], dense[0].W[d:]])
    return q, warned


def _pairs_to_raw(result: FitResult, data: Dataset, mu, sd, y_mu, y_sd,
                  kernel: KernelConfig) -> FitResult:
    model = result.model
    d = model.d
    basis, r = thin_qr(model.basis / sd[:, None])
    shift = (mu / sd) @ model.basis
    first = model.layers[0]
    Wx = r @ first.W[:d]
    Wy = first.W[d:] / y_sd
    b = first.b - shift @ first.W[:d] - (y_mu / y_sd) * first.W[d]
    layers = [Layer(W=np.vstack([Wx, Wy]), b=b, relu=first.relu)]
    layers.extend(l.copy() for l in model.layers[1:])
    last = layers[-1]
    last.W = last.W / y_sd
    last.b = last.b / y_sd
    raw = Model(basis=basis, layers=layers, extra_inputs=1)
    full = pair_loss(raw, raw.basis, data.X, data.y, kernel)
    return FitResult(model=raw, basis=raw.basis,
                     loss_trace=result.loss_trace / (y_sd * y_sd),
                     final_train_mse=full,
                     retraction_warnings=result.retraction_warnings,
                     stiefel_max_residual=result.stiefel_max_residual,
                     selected_restart=result.selected_restart,
                     diverged_restarts=result.diverged_restarts)
