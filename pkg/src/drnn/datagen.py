"""Simulation settings with known ground-truth bases, plus CSV ingestion.

Four synthetic regression scenarios and a toy cubic single-index model are
generated with fixed draw order (covariates first, then noise) so a given
``(spec, stream)`` pair replays bit-identically.  External numeric CSV data
is loaded into the same :class:`Dataset` container with ``truth`` absent.
"""

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateColumnError,
    EmptyDataError,
    MissingColumnError,
    ValidationError,
)
from .numerics import (
    ChiSquare,
    MultivariateNormal,
    RngStream,
    StandardNormal,
    StudentT,
    Uniform,
    sample,
    thin_qr,
)

__all__ = [
    "Dataset",
    "SettingSpec",
    "StandardizeParams",
    "generate_setting",
    "load_csv",
    "standardize",
    "apply_standardize",
    "save_dataset",
    "load_dataset",
]

SETTING_IDS = (1, 2, 3, 4, "toy")

# uncentered chi-square(2) noise is shifted by its mean in setting 3
_CHI2_MEAN = 2.0


@dataclass
class Dataset:
    """An ``n x p`` covariate matrix with response and optional truth basis."""

    X: np.ndarray
    y: np.ndarray
    truth: np.ndarray | None = None
    column_names: list[str] | None = None

    def __post_init__(self):
        self.X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if self.X.ndim != 2:
            raise ValidationError(f"X must be a matrix, got ndim={self.X.ndim}")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValidationError(
                f"X has {self.X.shape[0]} rows but y has {self.y.shape[0]} entries"
            )
        if self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=np.float64)
            if self.truth.ndim == 1:
                self.truth = self.truth[:, None]
            if self.truth.shape[0] != self.X.shape[1]:
                raise ValidationError("truth basis row count must equal the number of covariates")
            gram = self.truth.T @ self.truth
            if np.linalg.norm(gram - np.eye(self.truth.shape[1])) > 1e-10:
                raise ValidationError("truth basis columns are not orthonormal")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class SettingSpec:
    """Parameters of one simulation scenario."""

    setting_id: int | str
    n: int
    p: int
    d: int
    sigma: float | None = None

    def validate(self) -> None:
        if self.setting_id not in SETTING_IDS:
            raise ValidationError(f"unknown setting {self.setting_id!r}; expected one of {SETTING_IDS}")
        if self.n < 1:
            raise ValidationError(f"sample size must be positive, got {self.n}")
        sid = self.setting_id
        if sid == 1:
            if self.d != 1 or self.p not in (10, 30):
                raise ValidationError("setting 1 requires d=1 and p in {10, 30}")
        elif sid == 2:
            if self.p != 10 or self.d != 2:
                raise ValidationError("setting 2 requires p=10 and d=2")
            if self.sigma is None or not self.sigma > 0:
                raise ValidationError("setting 2 requires a positive noise scale sigma")
        elif sid == 3:
            if self.p != 6 or self.d != 3:
                raise ValidationError("setting 3 requires p=6 and d=3")
        elif sid == 4:
            if self.p != 10 or self.d not in (4, 6, 8):
                raise ValidationError("setting 4 requires p=10 and d in {4, 6, 8}")
        elif sid == "toy":
            if self.p != 10 or self.d != 1:
                raise ValidationError("the toy setting requires p=10 and d=1")
        if sid != 2 and self.sigma is not None:
            raise ValidationError(f"sigma only applies to setting 2, got sigma={self.sigma} for setting {sid}")


def setting3_truth() -> np.ndarray:
    """Orthonormalized (in order) span of the three setting-3 index vectors."""
    b1 = np.array([-2.0, -1.0, 0.0, 1.0, 2.0, 3.0])
    b2 = np.ones(6)
    b3 = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
    q, _ = thin_qr(np.column_stack([b1, b2, b3]))
    return q


def _basis_from_unit_columns(p: int, d: int) -> np.ndarray:
    basis = np.zeros((p, d))
    basis[np.arange(d), np.arange(d)] = 1.0
    return basis


def generate_setting(spec: SettingSpec, stream: RngStream) -> Dataset:
    """Generate one replicate of a simulation setting.

    Covariates are drawn before noise, and setting 2 redraws any row whose
    log argument falls below 1e-12 (a probability-zero safeguard), so the
    output is a deterministic function of ``(spec, stream)``.
    """
    spec.validate()
    n, p, d = spec.n, spec.p, spec.d
    sid = spec.setting_id

    if sid == 1:
        X = stream.normal((n, p))
        eps = sample(stream, StudentT(5), n)
        y = X[:, 0] ** 4 + eps
        truth = _basis_from_unit_columns(p, 1)
    elif sid == 2:
        X = stream.uniform01((n, p))
        arg = X[:, 0] * (1.0 + X[:, 1])
        bad = np.flatnonzero(arg < 1e-12)
        while bad.size:
            X[bad] = stream.uniform01((bad.size, p))
            arg = X[:, 0] * (1.0 + X[:, 1])
            bad = np.flatnonzero(arg < 1e-12)
        eps = spec.sigma * stream.normal(n)
        y = np.log(arg) + eps
        truth = _basis_from_unit_columns(p, 2)
    elif sid == 3:
        X = sample_matrix_uniform(stream, n, p, -1.0, 1.0)
        b1 = np.array([-2.0, -1.0, 0.0, 1.0, 2.0, 3.0])
        b2 = np.ones(6)
        b3 = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
        eps = sample(stream, ChiSquare(2), n) - _CHI2_MEAN
        y = (1.0 + X @ b1) ** 2 * np.exp(X @ b2) + 5.0 * (X @ b3 > 0) + eps
        truth = setting3_truth()
    elif sid == 4:
        cov = np.eye(10) - np.ones((10, 10)) / 20.0
        X = sample(stream, MultivariateNormal(np.ones(10), cov), n)
        eps = 0.1 * stream.normal(n)
        active = X[:, :d]
        y = np.sum(np.exp(active) / (2.0 + np.sin(np.pi * active)), axis=1) + eps
        truth = _basis_from_unit_columns(p, d)
    else:  # toy
        X = stream.uniform01((n, p))
        eps = 0.1 * stream.normal(n)
        b0 = toy_direction_raw()
        y = (X @ b0) ** 3 + eps
        truth = (b0 / np.linalg.norm(b0))[:, None]

    if not np.all(np.isfinite(y)):
        raise ValidationError(f"setting {sid} produced non-finite responses")
    names = [f"x{j + 1}" for j in range(p)]
    return Dataset(X=X, y=y, truth=truth, column_names=names)


def toy_direction_raw() -> np.ndarray:
    """The unnormalized toy index vector (1, -2, 0, ..., 0)."""
    b0 = np.zeros(10)
    b0[0] = 1.0
    b0[1] = -2.0
    return b0


def sample_matrix_uniform(stream: RngStream, n: int, p: int, low: float, high: float) -> np.ndarray:
    return low + (high - low) * stream.uniform01((n, p))


# --------------------------------------------------------------------------
# External CSV data
# --------------------------------------------------------------------------

@dataclass
class LoadReport:
    dropped_rows: int = 0


def load_csv(path, target_column: str) -> tuple[Dataset, LoadReport]:
    """Load a numeric CSV with a header row into a :class:`Dataset`.

    Rows with missing or non-numeric cells are dropped; the count of dropped
    rows is returned alongside the data.  The target column becomes ``y``
    and every other column a covariate, in file order.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataError(f"{path} is empty") from None
        header = [name.strip() for name in header]
        if target_column not in header:
            raise MissingColumnError(
                f"target column {target_column!r} not found; columns are {header}"
            )
        target_idx = header.index(target_column)
        rows = []
        dropped = 0
        for raw in reader:
            if len(raw) != len(header):
                dropped += 1
                continue
            try:
                rows.append([float(cell) for cell in raw])
            except ValueError:
                dropped += 1
    if not rows:
        raise EmptyDataError(f"{path} has no usable numeric rows ({dropped} dropped)")
    data = np.asarray(rows, dtype=np.float64)
    y = data[:, target_idx]
    X = np.delete(data, target_idx, axis=1)
    names = [name for i, name in enumerate(header) if i != target_idx]
    return Dataset(X=X, y=y, column_names=names), LoadReport(dropped_rows=dropped)


@dataclass(frozen=True)
class StandardizeParams:
    """Per-column z-score parameters, reusable on held-out data."""

    means: np.ndarray
    sds: np.ndarray


def standardize(data: Dataset) -> tuple[Dataset, StandardizeParams]:
    """Z-score every covariate column (sample standard deviation, n-1).

    Raises :class:`DegenerateColumnError` naming the first constant column.
    """
    if data.n < 2:
        raise ValidationError("standardization needs at least two rows")
    means = data.X.mean(axis=0)
    sds = data.X.std(axis=0, ddof=1)
    for j, sd in enumerate(sds):
        if not sd > 0:
            name = data.column_names[j] if data.column_names else f"column {j}"
            raise DegenerateColumnError(f"{name} has zero sample standard deviation")
    scaled = Dataset(
        X=(data.X - means) / sds,
        y=data.y.copy(),
        truth=data.truth,
        column_names=list(data.column_names) if data.column_names else None,
    )
    return scaled, StandardizeParams(means=means, sds=sds)


def apply_standardize(X: np.ndarray, params: StandardizeParams) -> np.ndarray:
    """Apply stored z-score parameters to new covariate rows."""
    return (np.asarray(X, dtype=np.float64) - params.means) / params.sds


# --------------------------------------------------------------------------
# Dataset files (CSV + JSON sidecar)
# --------------------------------------------------------------------------

def save_dataset(data: Dataset, csv_path, sidecar_path=None, spec: SettingSpec | None = None,
                 seed: int | None = None) -> None:
    """Write a dataset as CSV (x1..xp, y) plus a JSON sidecar.

    The sidecar records the generating spec and the truth basis when known;
    both files are written atomically and byte-deterministically.
    """
    names = data.column_names or [f"x{j + 1}" for j in range(data.p)]
    lines = [",".join(names + ["y"])]
    for i in range(data.n):
        cells = [repr(float(v)) for v in data.X[i]] + [repr(float(data.y[i]))]
        lines.append(",".join(cells))
    _atomic_write_text(csv_path, "\n".join(lines) + "\n")
    if sidecar_path is not None:
        doc = {
            "version": "drnn-data/1",
            "n": data.n,
            "p": data.p,
            "columns": names,
            "target": "y",
        }
        if spec is not None:
            doc["setting"] = spec.setting_id
            doc["d"] = spec.d
            if spec.sigma is not None:
                doc["sigma"] = spec.sigma
        if seed is not None:
            doc["seed"] = seed
        if data.truth is not None:
            doc["truth"] = [[float(v) for v in row] for row in data.truth]
        _atomic_write_text(sidecar_path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_dataset(csv_path, sidecar_path=None) -> Dataset:
    """Load a dataset written by :func:`save_dataset`, restoring truth if present."""
    data, _ = load_csv(csv_path, target_column="y")
    if sidecar_path is not None and os.path.exists(sidecar_path):
        with open(sidecar_path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if "truth" in doc:
            data = Dataset(
                X=data.X,
                y=data.y,
                truth=np.asarray(doc["truth"], dtype=np.float64),
                column_names=data.column_names,
            )
    return data


def _atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)
