"""Sufficient dimension reduction with neural networks and classical estimators."""

from .classical import (MaveConfig, SliceSpec, default_save_slices, mave, phd,
                        phd_spectrum, save, sir, sir_spectrum)
from .datagen import (Dataset, SettingSpec, generate_setting, load_csv,
                      load_dataset, save_dataset, standardize)
from .density import (KernelConfig, PairBatchPlan, density_forward,
                      gaussian_kernel, pair_loss, silverman_bandwidth,
                      train_central_subspace)
from .errors import (BandwidthError, DegenerateColumnError, DivergenceError,
                     DrnnError, EmptyDataError, MissingColumnError,
                     NumericalError, RankDeficiencyError, ValidationError,
                     WhiteningError)
from .metrics import (cosine_to_subspace, procrustes_distance, proj_distance,
                      projection)
from .network import (Adam, FitResult, Model, Sgd, TrainConfig, default_width,
                      forward, model_from_json, model_to_json, predict,
                      toy_diagnostics, train)
from .numerics import RngStream, sym_eig, thin_qr
from .selection import (BenchmarkGrid, CvResult, cv_select_d, default_grid,
                        report_to_csv, report_to_json, run_benchmark, split)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "BandwidthError",
    "BenchmarkGrid",
    "CvResult",
    "Dataset",
    "DegenerateColumnError",
    "DivergenceError",
    "DrnnError",
    "EmptyDataError",
    "FitResult",
    "KernelConfig",
    "MaveConfig",
    "MissingColumnError",
    "Model",
    "NumericalError",
    "PairBatchPlan",
    "RankDeficiencyError",
    "RngStream",
    "SettingSpec",
    "Sgd",
    "SliceSpec",
    "TrainConfig",
    "ValidationError",
    "WhiteningError",
    "__version__",
    "cosine_to_subspace",
    "cv_select_d",
    "default_grid",
    "default_save_slices",
    "default_width",
    "density_forward",
    "forward",
    "gaussian_kernel",
    "generate_setting",
    "load_csv",
    "load_dataset",
    "mave",
    "model_from_json",
    "model_to_json",
    "pair_loss",
    "phd",
    "phd_spectrum",
    "predict",
    "procrustes_distance",
    "proj_distance",
    "projection",
    "report_to_csv",
    "report_to_json",
    "run_benchmark",
    "save",
    "save_dataset",
    "silverman_bandwidth",
    "sir",
    "sir_spectrum",
    "split",
    "standardize",
    "sym_eig",
    "thin_qr",
    "toy_diagnostics",
    "train",
    "train_central_subspace",
]
