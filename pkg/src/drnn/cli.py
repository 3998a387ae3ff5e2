"""Command-line interface: generate, fit, benchmark, cv, compare.

Exit codes: 0 success, 2 validation problem, 3 I/O problem, 4 numerical
failure.  Every output file is written atomically, and every command is
a deterministic function of its flags and input files.  Report commands
render a PNG figure next to their delimited outputs.
"""

import argparse
import json
import os
import sys

import numpy as np

from .classical import MaveConfig, SliceSpec, mave, phd, save, sir
from .datagen import (Dataset, SettingSpec, generate_setting, load_csv,
                      save_dataset)
from .density import KernelConfig, PairBatchPlan, train_central_subspace
from .errors import NumericalError, ValidationError
from .metrics import proj_distance
from .network import (TrainConfig, default_width, forward, forward_chain,
                      model_to_json, train, train_chain, uniform_chain)
from .numerics import RngStream
from .selection import (METHODS, BenchmarkGrid, cv_select_d, default_grid,
                        nn_cell_config, report_to_csv, report_to_json,
                        report_to_plot_csv, run_benchmark, split)

__all__ = ["main", "console_main"]

_SETTING_DEFAULTS = {
    # setting id -> (p, d)
    1: (10, 1),
    2: (10, 2),
    3: (6, 3),
    4: (10, 4),
    "toy": (10, 1),
}


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _sidecar_path(data_path: str) -> str:
    base = data_path[:-4] if data_path.endswith(".csv") else data_path
    return base + ".meta.json"


def _load(args) -> Dataset:
    data, report = load_csv(args.data, args.target)
    sidecar = _sidecar_path(args.data)
    if os.path.exists(sidecar):
        with open(sidecar, encoding="utf-8") as fh:
            doc = json.load(fh)
        if "truth" in doc:
            data = Dataset(X=data.X, y=data.y,
                           truth=np.asarray(doc["truth"], dtype=np.float64),
                           column_names=data.column_names)
    if report.dropped_rows:
        print(f"note: dropped {report.dropped_rows} malformed rows", file=sys.stderr)
    return data


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        value = args.threads
    else:
        raw = os.environ.get("DRNN_THREADS", "1")
        try:
            value = int(raw)
        except ValueError:
            raise ValidationError(f"DRNN_THREADS must be an integer, got {raw!r}")
    if value < 1:
        raise ValidationError(f"threads must be >= 1, got {value}")
    return value


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise ValidationError(f"{flag} must be a comma-separated integer list, got {text!r}")


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise ValidationError(f"{flag} must be a comma-separated number list, got {text!r}")


def _parse_d_range(text: str, p: int) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        try:
            grid = list(range(int(lo), int(hi) + 1))
        except ValueError:
            raise ValidationError(f"--d-range must look like 1..4, got {text!r}")
    else:
        grid = _parse_int_list(text, "--d-range")
    if not grid or grid[0] < 1 or grid[-1] > p:
        raise ValidationError(f"--d-range must stay within 1..{p}, got {text!r}")
    return grid


def _train_config(args, seed: int) -> TrainConfig:
    kw = {"seed": seed}
    if getattr(args, "iterations", None) is not None:
        kw["iterations"] = args.iterations
    if getattr(args, "learning_rate", None) is not None:
        kw["learning_rate"] = args.learning_rate
    if getattr(args, "batch", None) is not None:
        kw["batch"] = args.batch
    if getattr(args, "width", None) is not None:
        kw["h_override"] = args.width
    if getattr(args, "restarts", None) is not None:
        kw["restarts"] = args.restarts
    if getattr(args, "selection", None) is not None:
        kw["selection"] = args.selection
    return TrainConfig(**kw)


# --------------------------------------------------------------------------
# generate
# --------------------------------------------------------------------------

def cmd_generate(args) -> int:
    sid = args.setting if args.setting == "toy" else int(args.setting)
    p_default, d_default = _SETTING_DEFAULTS[sid]
    spec = SettingSpec(
        sid,
        n=args.n,
        p=args.p if args.p is not None else p_default,
        d=args.d if args.d is not None else d_default,
        sigma=args.sigma,
    )
    if sid == 2 and args.sigma is None:
        raise ValidationError("setting 2 needs --sigma")
    data = generate_setting(spec, RngStream(args.seed, 0))
    out = args.out or "data.csv"
    save_dataset(data, out, _sidecar_path(out), spec=spec, seed=args.seed)
    print(f"wrote {out} ({data.n} rows, {data.p} covariates) and {_sidecar_path(out)}")
    return 0


# --------------------------------------------------------------------------
# fit
# --------------------------------------------------------------------------

def _basis_csv(basis: np.ndarray) -> str:
    lines = [",".join(f"b{j + 1}" for j in range(basis.shape[1]))]
    for row in basis:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def _metrics_text(metrics: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(metrics, indent=2, sort_keys=True) + "\n"
    lines = ["key,value"]
    for key in sorted(metrics):
        value = metrics[key]
        if isinstance(value, dict):
            for sub in sorted(value):
                lines.append(f"{key}.{sub},{value[sub]}")
        else:
            lines.append(f"{key},{value}")
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    data = _load(args)
    p = data.p
    if not 1 <= args.d <= p:
        raise ValidationError(f"--d must lie in 1..{p}, got {args.d}")
    method = args.method
    out = args.out or "fit"
    metrics: dict = {"method": method, "d": args.d, "n": data.n, "p": p}
    model_doc = None

    if args.objective == "density":
        if method != "nn":
            raise ValidationError("--objective density applies to the nn method only")
        bw = args.bandwidth if args.bandwidth is not None else "silverman"
        kernel = KernelConfig(bandwidth=bw)
        plan = PairBatchPlan(batch_pairs=args.pairs) if args.pairs is not None \
            else PairBatchPlan()
        result = train_central_subspace(data, args.d, kernel=kernel,
                                        config=_train_config(args, args.seed), plan=plan)
        basis = result.basis
        metrics["pair_loss"] = result.final_train_mse
        metrics["loss_trace"] = _trace_summary(result.loss_trace)
        model_doc = model_to_json(result.model)
    elif method == "nn":
        result = train(data, args.d, _train_config(args, args.seed))
        basis = result.basis
        metrics["train_mse"] = result.final_train_mse
        metrics["loss_trace"] = _trace_summary(result.loss_trace)
        metrics["retraction_warnings"] = result.retraction_warnings
        model_doc = model_to_json(result.model)
    elif method in ("sir", "save"):
        slices = SliceSpec(args.slices) if args.slices is not None else None
        fn = sir if method == "sir" else save
        basis = fn(data.X, data.y, args.d, slices)
    elif method == "phd":
        basis = phd(data.X, data.y, args.d)
    elif method == "mave":
        cfg = MaveConfig(max_iter=args.iterations) if args.iterations is not None \
            else MaveConfig()
        basis = mave(data.X, data.y, args.d, cfg)
    else:
        raise ValidationError(f"unknown method {method!r}")

    if data.truth is not None:
        metrics["distance_to_truth"] = proj_distance(basis, data.truth)
    _atomic_write(out + ".basis.csv", _basis_csv(basis))
    written = [out + ".basis.csv"]
    if model_doc is not None:
        _atomic_write(out + ".model.json", model_doc + "\n")
        written.append(out + ".model.json")
    ext = "json" if args.format == "json" else "csv"
    _atomic_write(f"{out}.metrics.{ext}", _metrics_text(metrics, args.format))
    written.append(f"{out}.metrics.{ext}")
    print("wrote " + ", ".join(written))
    return 0


def _trace_summary(trace: np.ndarray) -> dict:
    return {
        "iterations": int(trace.shape[0]),
        "first": float(trace[0]),
        "last": float(trace[-1]),
        "min": float(trace.min()),
    }


# --------------------------------------------------------------------------
# benchmark
# --------------------------------------------------------------------------

def _benchmark_cells(args) -> tuple[SettingSpec, ...]:
    if args.setting == "all":
        if args.n or args.sigma or args.d or args.p:
            raise ValidationError("--setting all uses the built-in grid; "
                                  "drop --n/--p/--sigma/--d or pick one setting")
        return default_grid().cells
    sid = int(args.setting)
    if sid == 1:
        if args.n:
            ns = _parse_int_list(args.n, "--n")
            ps = _parse_int_list(args.p, "--p") if args.p else [10] * len(ns)
            if len(ps) == 1:
                ps = ps * len(ns)
            if len(ps) != len(ns):
                raise ValidationError("--p list must match --n list for setting 1")
            pairs = zip(ns, ps)
        else:
            pairs = [(100, 10), (200, 30), (300, 30)]
        return tuple(SettingSpec(1, n, p, 1) for n, p in pairs)
    if sid == 2:
        ns = _parse_int_list(args.n, "--n") if args.n else [200]
        sigmas = _parse_float_list(args.sigma, "--sigma") if args.sigma else [0.1, 0.2, 0.5]
        return tuple(SettingSpec(2, n, 10, 2, sigma=s) for n in ns for s in sigmas)
    if sid == 3:
        ns = _parse_int_list(args.n, "--n") if args.n else [200, 500, 1000]
        return tuple(SettingSpec(3, n, 6, 3) for n in ns)
    if sid == 4:
        if args.n:
            ns = _parse_int_list(args.n, "--n")
            ds = _parse_int_list(args.d, "--d") if args.d else [4] * len(ns)
            if len(ds) == 1:
                ds = ds * len(ns)
            if len(ds) != len(ns):
                raise ValidationError("--d list must match --n list for setting 4")
            pairs = zip(ns, ds)
        else:
            pairs = [(1000, 4), (1500, 6), (2000, 8)]
        return tuple(SettingSpec(4, n, 10, d) for n, d in pairs)
    raise ValidationError(f"--setting must be one of 1,2,3,4,all; got {args.setting!r}")


def cmd_benchmark(args) -> int:
    methods = tuple(METHODS) if args.methods in (None, "all") \
        else tuple(m.strip() for m in args.methods.split(","))
    grid = BenchmarkGrid(cells=_benchmark_cells(args), methods=methods,
                         replicates=args.replicates, base_seed=args.seed)
    report = run_benchmark(grid, threads=_threads(args))
    out = args.out or "benchmark"
    _atomic_write(out + ".json", report_to_json(report) + "\n")
    _atomic_write(out + ".csv", report_to_csv(report))
    _atomic_write(out + ".plot.csv", report_to_plot_csv(report))
    from .plots import benchmark_figure, save_figure
    save_figure(benchmark_figure(report), out + ".png")
    print(f"wrote {out}.json, {out}.csv, {out}.plot.csv, {out}.png")
    return 0


# --------------------------------------------------------------------------
# cv
# --------------------------------------------------------------------------

def cmd_cv(args) -> int:
    data = _load(args)
    d_grid = _parse_d_range(args.d_range, data.p)
    repeats = args.repeats
    if repeats < 1:
        raise ValidationError(f"--repeats must be >= 1, got {repeats}")
    rows = []
    for r in range(repeats):
        train_part, test_part = split(data, args.test_fraction,
                                      RngStream(args.seed, 500_000 + r))
        cfg = _train_config(args, args.seed + 7 * r)
        result = cv_select_d(train_part, d_grid, k_folds=args.folds, config=cfg,
                             test_data=test_part,
                             fold_stream=RngStream(args.seed, 600_000 + r))
        rows.append(result)
    doc = {
        "version": "drnn-cv/1",
        "d_grid": d_grid,
        "folds": args.folds,
        "test_fraction": args.test_fraction,
        "repeats": [
            {
                "mean_mse": list(r.mean_mse),
                "std_mse": list(r.std_mse),
                "chosen_d": r.chosen_d,
                "test_mse": r.final_test_mse,
            }
            for r in rows
        ],
    }
    tests = [r.final_test_mse for r in rows]
    chosen = [r.chosen_d for r in rows]
    doc["summary"] = {
        "test_mse_mean": float(np.mean(tests)),
        "test_mse_std": float(np.std(tests, ddof=1)) if len(tests) > 1 else 0.0,
        "mean_chosen_d": float(np.mean(chosen)),
    }
    out = args.out or "cv"
    _atomic_write(out + ".json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    from .plots import cv_figure, save_figure
    save_figure(cv_figure(d_grid, [r.mean_mse for r in rows], chosen), out + ".png")
    print(f"wrote {out}.json, {out}.png "
          f"(chosen d: {', '.join(str(c) for c in chosen)})")
    return 0


# --------------------------------------------------------------------------
# compare
# --------------------------------------------------------------------------

_COMPARE_METHODS = ("nn-rr", "nn-vanilla", "mave", "sir", "save")


def _fit_chain_regressor(X_tr, y_tr, X_te, dims, config: TrainConfig,
                         stream: RngStream) -> np.ndarray:
    """Unconstrained least-squares chain on standardized data; raw-scale predictions."""
    mu = X_tr.mean(axis=0)
    sd = X_tr.std(axis=0, ddof=1)
    sd = np.where(sd > 0, sd, 1.0)
    y_mu, y_sd = float(y_tr.mean()), float(y_tr.std(ddof=1))
    if not y_sd > 0:
        y_sd = 1.0
    layers = uniform_chain(dims, stream)
    layers, _, _ = train_chain(layers, (X_tr - mu) / sd, (y_tr - y_mu) / y_sd, config)
    pred, _ = forward_chain(layers, (X_te - mu) / sd)
    return pred * y_sd + y_mu


def cmd_compare(args) -> int:
    data = _load(args)
    p = data.p
    d = args.d
    if d is None:
        raise ValidationError("--d is required for compare")
    if not 1 <= d <= p:
        raise ValidationError(f"--d must lie in 1..{p}, got {d}")
    methods = _COMPARE_METHODS if args.methods in (None, "all") \
        else tuple(m.strip() for m in args.methods.split(","))
    for m in methods:
        if m not in _COMPARE_METHODS:
            raise ValidationError(f"unknown compare method {m!r}; "
                                  f"expected a subset of {_COMPARE_METHODS}")
    train_part, test_part = split(data, args.test_fraction, RngStream(args.seed, 1))
    h = default_width(train_part.n)
    scores: dict[str, float] = {}
    for k, method in enumerate(methods):
        cfg = _train_config(args, args.seed + 101 * (k + 1))
        if method == "nn-rr":
            result = train(train_part, d, cfg)
            pred = forward(result.model, test_part.X)
        elif method == "nn-vanilla":
            pred = _fit_chain_regressor(train_part.X, train_part.y, test_part.X,
                                        [p, h, h // 2, 1], cfg,
                                        RngStream(args.seed, 7000 + k))
        else:
            fn = {"mave": mave, "sir": sir, "save": save}[method]
            basis = fn(train_part.X, train_part.y, d)
            pred = _fit_chain_regressor(train_part.X @ basis, train_part.y,
                                        test_part.X @ basis,
                                        [d, h, h // 2, 1], cfg,
                                        RngStream(args.seed, 7000 + k))
        scores[method] = float(np.mean((pred - test_part.y) ** 2))
    doc = {
        "version": "drnn-compare/1",
        "d": d,
        "test_fraction": args.test_fraction,
        "train_rows": train_part.n,
        "test_rows": test_part.n,
        "test_mse": scores,
    }
    out = args.out or "compare"
    _atomic_write(out + ".json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    from .plots import compare_figure, save_figure
    save_figure(compare_figure(scores), out + ".png")
    best = min(scores, key=scores.get)
    print(f"wrote {out}.json, {out}.png (best: {best} {scores[best]:.4g})")
    return 0


# --------------------------------------------------------------------------
# parser and dispatch
# --------------------------------------------------------------------------

def _add_common(sp, out_default: str) -> None:
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None, help=f"output path prefix (default {out_default})")
    sp.add_argument("--format", choices=("json", "csv"), default="json")


def _add_nn_flags(sp) -> None:
    sp.add_argument("--iterations", type=int, default=None)
    sp.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    sp.add_argument("--batch", type=int, default=None)
    sp.add_argument("--width", type=int, default=None, help="hidden width override")
    sp.add_argument("--restarts", type=int, default=None)
    sp.add_argument("--selection", choices=("train", "holdout"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drnn",
        description="Sufficient dimension reduction with rank-constrained neural networks.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    g = sub.add_parser("generate", help="simulate a benchmark setting to CSV")
    g.add_argument("--setting", required=True, choices=("1", "2", "3", "4", "toy"))
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--p", type=int, default=None)
    g.add_argument("--d", type=int, default=None)
    g.add_argument("--sigma", type=float, default=None)
    _add_common(g, "data.csv")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="estimate a basis from a data file")
    f.add_argument("--data", required=True)
    f.add_argument("--target", default="y", help="response column name")
    f.add_argument("--method", default="nn", choices=("nn", "sir", "save", "phd", "mave"))
    f.add_argument("--d", type=int, required=True)
    f.add_argument("--objective", choices=("mean", "density"), default="mean")
    f.add_argument("--slices", type=int, default=None)
    f.add_argument("--bandwidth", type=float, default=None)
    f.add_argument("--pairs", type=int, default=None)
    _add_nn_flags(f)
    _add_common(f, "fit")
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("benchmark", help="replicated simulation study")
    b.add_argument("--setting", default="all")
    b.add_argument("--n", default=None)
    b.add_argument("--p", default=None)
    b.add_argument("--sigma", default=None)
    b.add_argument("--d", default=None)
    b.add_argument("--methods", default="all")
    b.add_argument("--replicates", type=int, default=20)
    b.add_argument("--threads", type=int, default=None)
    _add_common(b, "benchmark")
    b.set_defaults(func=cmd_benchmark)

    c = sub.add_parser("cv", help="cross-validated dimension selection")
    c.add_argument("--data", required=True)
    c.add_argument("--target", default="y")
    c.add_argument("--d-range", dest="d_range", required=True)
    c.add_argument("--folds", type=int, default=5)
    c.add_argument("--test-fraction", dest="test_fraction", type=float, default=0.2)
    c.add_argument("--repeats", type=int, default=1)
    _add_nn_flags(c)
    _add_common(c, "cv")
    c.set_defaults(func=cmd_cv)

    m = sub.add_parser("compare", help="held-out error of reduction + regression pipelines")
    m.add_argument("--data", required=True)
    m.add_argument("--target", default="y")
    m.add_argument("--d", type=int, required=True)
    m.add_argument("--methods", default="all")
    m.add_argument("--test-fraction", dest="test_fraction", type=float, default=0.2)
    _add_nn_flags(m)
    _add_common(m, "compare")
    m.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.func(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 4
    except np.linalg.LinAlgError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 4
    except OSError as err:
        print(f"i/o failure: {err}", file=sys.stderr)
        return 3


def console_main() -> None:
    sys.exit(main())
