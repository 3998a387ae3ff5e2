"""Deterministic matplotlib figures for benchmark, CV, and comparison reports.

Rendering uses the Agg backend and fixed layout parameters so a rerun
with the same inputs reproduces the PNG bytes.  Figures are saved
atomically next to the delimited outputs they illustrate.
"""

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .selection import BenchmarkReport, cell_label

__all__ = [
    "save_figure",
    "benchmark_figure",
    "cv_figure",
    "compare_figure",
]

_DPI = 120
_METHOD_COLORS = {
    "nn": "#1f77b4",
    "nn-rr": "#1f77b4",
    "nn-vanilla": "#8c9fc4",
    "mave": "#ff7f0e",
    "sir": "#2ca02c",
    "save": "#d62728",
    "phd": "#9467bd",
}


def _color(method: str) -> str:
    return _METHOD_COLORS.get(method, "#7f7f7f")


def save_figure(fig, path) -> None:
    """Atomic PNG save with pinned dpi and metadata."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    try:
        fig.savefig(tmp, format="png", dpi=_DPI,
                    metadata={"Software": "drnn"})
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
        plt.close(fig)


def benchmark_figure(report: BenchmarkReport):
    """Mean distance with std bars, one panel per setting, grouped by method."""
    grid = report.grid
    settings = []
    for spec in grid.cells:
        if spec.setting_id not in settings:
            settings.append(spec.setting_id)
    fig, axes = plt.subplots(1, len(settings),
                             figsize=(4.0 * len(settings), 3.6), squeeze=False)
    agg = {(a.cell, a.method): a for a in report.aggregates}
    for ax, sid in zip(axes[0], settings):
        cells = [i for i, s in enumerate(grid.cells) if s.setting_id == sid]
        width = 0.8 / len(grid.methods)
        for k, method in enumerate(grid.methods):
            xs, means, stds = [], [], []
            for pos, ci in enumerate(cells):
                a = agg[(ci, method)]
                if a.mean is None:
                    continue
                xs.append(pos + (k - (len(grid.methods) - 1) / 2.0) * width)
                means.append(a.mean)
                stds.append(a.std if a.std is not None else 0.0)
            if xs:
                ax.bar(xs, means, width=width * 0.92, yerr=stds, capsize=2,
                       color=_color(method), label=method,
                       error_kw={"linewidth": 0.8})
        ax.set_xticks(range(len(cells)))
        ax.set_xticklabels([_short_cell(grid.cells[ci]) for ci in cells],
                           fontsize=8, rotation=20, ha="right")
        ax.set_title(f"setting {sid}", fontsize=10)
        ax.set_ylabel("projection distance" if sid == settings[0] else "")
        ax.tick_params(labelsize=8)
    axes[0][-1].legend(fontsize=8, frameon=False)
    fig.suptitle("subspace estimation error (mean over replicates, std bars)",
                 fontsize=11)
    fig.tight_layout(rect=(0, 0, 1, 0.94))
    return fig


def _short_cell(spec) -> str:
    label = f"n={spec.n}"
    if spec.setting_id == 1:
        label += f", p={spec.p}"
    elif spec.sigma is not None:
        label = f"sigma={spec.sigma:g}"
    elif spec.setting_id == 4:
        label += f", d={spec.d}"
    return label


def cv_figure(d_grid, curves, chosen):
    """Validation-MSE curve over candidate d.

    ``curves`` is a list of per-repeat mean-MSE tuples; ``chosen`` the list
    of selected d values.
    """
    arr = np.asarray(curves, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    mean = arr.mean(axis=0)
    ax.plot(d_grid, mean, marker="o", color="#1f77b4", label="mean CV MSE")
    if arr.shape[0] > 1:
        std = arr.std(axis=0, ddof=1)
        ax.fill_between(d_grid, mean - std, mean + std,
                        color="#1f77b4", alpha=0.2, linewidth=0)
    picks, counts = np.unique(chosen, return_counts=True)
    for d, c in zip(picks, counts):
        ax.axvline(d, color="#d62728", alpha=min(1.0, 0.25 + 0.75 * c / len(chosen)),
                   linestyle="--", linewidth=1.0)
    ax.set_xticks(list(d_grid))
    ax.set_xlabel("reduced dimension d")
    ax.set_ylabel("validation MSE")
    ax.set_title(f"cross-validated dimension (chosen: "
                 f"{', '.join(f'{d}x{c}' for d, c in zip(picks, counts))})", fontsize=10)
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    return fig


def compare_figure(scores: dict[str, float]):
    """Held-out test MSE per method."""
    methods = list(scores)
    values = [scores[m] for m in methods]
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.bar(range(len(methods)), values,
           color=[_color(m) for m in methods], width=0.6)
    ax.set_xticks(range(len(methods)))
    ax.set_xticklabels(methods, fontsize=9)
    ax.set_ylabel("test MSE")
    ax.set_title("held-out prediction error by method", fontsize=10)
    for i, v in enumerate(values):
        ax.text(i, v, f"{v:.3g}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    return fig
