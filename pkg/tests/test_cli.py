import json

import numpy as np
import pytest

from drnn.cli import main
from drnn.network import model_from_json

FAST_NN = ["--iterations", "40", "--restarts", "1", "--width", "8"]


def _generate(tmp_path, name="data.csv", setting="1", n="60", extra=()):
    path = tmp_path / name
    code = main(["generate", "--setting", setting, "--n", n, "--seed", "7",
                 "--out", str(path), *extra])
    assert code == 0
    return path


def _read_basis(path):
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    rows = [[float(v) for v in line.split(",")] for line in lines[1:]]
    return header, np.asarray(rows)


def test_generate_writes_csv_and_sidecar(tmp_path):
    path = _generate(tmp_path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == ",".join([f"x{j}" for j in range(1, 11)] + ["y"])
    assert len(lines) == 61
    meta = json.loads((tmp_path / "data.meta.json").read_text())
    assert meta["setting"] == 1 and meta["d"] == 1 and meta["seed"] == 7
    assert len(meta["truth"]) == 10


def test_generate_is_byte_deterministic(tmp_path):
    a = _generate(tmp_path, "a.csv")
    b = _generate(tmp_path, "b.csv")
    assert a.read_bytes() == b.read_bytes()
    meta_a = (tmp_path / "a.meta.json").read_text()
    meta_b = (tmp_path / "b.meta.json").read_text()
    assert meta_a == meta_b


def test_generate_setting2_needs_sigma(tmp_path):
    code = main(["generate", "--setting", "2", "--n", "50",
                 "--out", str(tmp_path / "d.csv")])
    assert code == 2
    code = main(["generate", "--setting", "2", "--n", "50", "--sigma", "0.2",
                 "--out", str(tmp_path / "d.csv")])
    assert code == 0
    meta = json.loads((tmp_path / "d.meta.json").read_text())
    assert meta["sigma"] == 0.2


def test_fit_nn_roundtrip(tmp_path):
    data = _generate(tmp_path)
    out = tmp_path / "fit"
    code = main(["fit", "--data", str(data), "--d", "1", *FAST_NN,
                 "--out", str(out)])
    assert code == 0
    header, basis = _read_basis(tmp_path / "fit.basis.csv")
    assert header == ["b1"]
    assert basis.shape == (10, 1)
    assert abs(np.linalg.norm(basis) - 1.0) < 1e-10
    model = model_from_json((tmp_path / "fit.model.json").read_text())
    assert model.p == 10 and model.d == 1
    metrics = json.loads((tmp_path / "fit.metrics.json").read_text())
    assert metrics["method"] == "nn"
    assert metrics["loss_trace"]["iterations"] == 40
    assert "train_mse" in metrics
    assert 0.0 <= metrics["distance_to_truth"] <= np.sqrt(2.0)


def test_fit_outputs_are_byte_deterministic(tmp_path):
    data = _generate(tmp_path)
    for out in ("f1", "f2"):
        assert main(["fit", "--data", str(data), "--d", "1", *FAST_NN,
                     "--out", str(tmp_path / out)]) == 0
    for suffix in (".basis.csv", ".model.json", ".metrics.json"):
        assert (tmp_path / f"f1{suffix}").read_bytes() == \
            (tmp_path / f"f2{suffix}").read_bytes()


def test_fit_sir_with_slices(tmp_path):
    data = _generate(tmp_path)
    out = tmp_path / "sirfit"
    code = main(["fit", "--data", str(data), "--method", "sir", "--d", "1",
                 "--slices", "5", "--format", "csv", "--out", str(out)])
    assert code == 0
    _, basis = _read_basis(tmp_path / "sirfit.basis.csv")
    assert abs(np.linalg.norm(basis) - 1.0) < 1e-10
    assert not (tmp_path / "sirfit.model.json").exists()
    text = (tmp_path / "sirfit.metrics.csv").read_text()
    assert text.startswith("key,value\n")
    assert "method,sir" in text


def test_fit_density_objective(tmp_path):
    data = _generate(tmp_path, n="50")
    out = tmp_path / "dens"
    code = main(["fit", "--data", str(data), "--d", "1", "--objective", "density",
                 "--pairs", "128", "--iterations", "25", "--restarts", "1",
                 "--width", "8", "--out", str(out)])
    assert code == 0
    metrics = json.loads((tmp_path / "dens.metrics.json").read_text())
    assert metrics["pair_loss"] >= 0.0
    model = model_from_json((tmp_path / "dens.model.json").read_text())
    assert model.extra_inputs == 1


def test_fit_density_rejects_other_methods(tmp_path):
    data = _generate(tmp_path, n="50")
    code = main(["fit", "--data", str(data), "--d", "1", "--method", "sir",
                 "--objective", "density", "--out", str(tmp_path / "x")])
    assert code == 2


def test_fit_exit_codes(tmp_path):
    data = _generate(tmp_path)
    assert main(["fit", "--data", str(tmp_path / "missing.csv"), "--d", "1"]) == 3
    assert main(["fit", "--data", str(data), "--d", "99",
                 "--out", str(tmp_path / "x")]) == 2
    assert main(["fit", "--data", str(data), "--d", "0",
                 "--out", str(tmp_path / "x")]) == 2


def test_fit_respects_target_column(tmp_path):
    path = tmp_path / "custom.csv"
    st = np.random.default_rng(0)
    rows = ["a,b,resp"]
    for _ in range(40):
        a, b = st.normal(), st.normal()
        rows.append(f"{a!r},{b!r},{a + b!r}")
    path.write_text("\n".join(rows) + "\n")
    code = main(["fit", "--data", str(path), "--target", "resp", "--method", "sir",
                 "--d", "1", "--out", str(tmp_path / "t")])
    assert code == 0
    _, basis = _read_basis(tmp_path / "t.basis.csv")
    assert basis.shape == (2, 1)
    metrics = json.loads((tmp_path / "t.metrics.json").read_text())
    assert "distance_to_truth" not in metrics


def test_benchmark_tiny_grid(tmp_path):
    out = tmp_path / "bench"
    code = main(["benchmark", "--setting", "3", "--n", "60", "--methods", "sir,save",
                 "--replicates", "2", "--out", str(out)])
    assert code == 0
    doc = json.loads((tmp_path / "bench.json").read_text())
    assert doc["version"] == "drnn-benchmark/1"
    assert doc["methods"] == ["sir", "save"]
    assert len(doc["rows"]) == 4
    csv_lines = (tmp_path / "bench.csv").read_text().strip().split("\n")
    assert len(csv_lines) == 3
    assert (tmp_path / "bench.plot.csv").exists()
    assert (tmp_path / "bench.png").read_bytes()[:4] == b"\x89PNG"


def test_benchmark_outputs_are_byte_deterministic(tmp_path):
    args = ["benchmark", "--setting", "1", "--n", "60", "--p", "10",
            "--methods", "sir", "--replicates", "2"]
    assert main([*args, "--out", str(tmp_path / "r1")]) == 0
    assert main([*args, "--out", str(tmp_path / "r2")]) == 0
    for suffix in (".json", ".csv", ".plot.csv", ".png"):
        assert (tmp_path / f"r1{suffix}").read_bytes() == \
            (tmp_path / f"r2{suffix}").read_bytes()


def test_benchmark_flag_validation(tmp_path):
    assert main(["benchmark", "--setting", "all", "--n", "100",
                 "--out", str(tmp_path / "x")]) == 2
    assert main(["benchmark", "--setting", "9",
                 "--out", str(tmp_path / "x")]) == 2
    assert main(["benchmark", "--setting", "1", "--methods", "ols",
                 "--out", str(tmp_path / "x")]) == 2
    assert main(["benchmark", "--setting", "1", "--n", "60,80", "--p", "10,10,10",
                 "--out", str(tmp_path / "x")]) == 2


def test_cv_command(tmp_path):
    data = _generate(tmp_path, n="60")
    out = tmp_path / "cv"
    code = main(["cv", "--data", str(data), "--d-range", "1..2", "--folds", "3",
                 "--repeats", "2", *FAST_NN, "--out", str(out)])
    assert code == 0
    doc = json.loads((tmp_path / "cv.json").read_text())
    assert doc["version"] == "drnn-cv/1"
    assert doc["d_grid"] == [1, 2]
    assert len(doc["repeats"]) == 2
    for rep in doc["repeats"]:
        assert rep["chosen_d"] in (1, 2)
        assert len(rep["mean_mse"]) == 2
    assert "test_mse_mean" in doc["summary"]
    assert (tmp_path / "cv.png").read_bytes()[:4] == b"\x89PNG"


def test_cv_range_validation(tmp_path):
    data = _generate(tmp_path, n="60")
    assert main(["cv", "--data", str(data), "--d-range", "0..2", *FAST_NN,
                 "--out", str(tmp_path / "x")]) == 2
    assert main(["cv", "--data", str(data), "--d-range", "5..1", *FAST_NN,
                 "--out", str(tmp_path / "x")]) == 2
    assert main(["cv", "--data", str(data), "--d-range", "1..40", *FAST_NN,
                 "--out", str(tmp_path / "x")]) == 2


def test_compare_command(tmp_path):
    data = _generate(tmp_path, n="80")
    out = tmp_path / "cmp"
    code = main(["compare", "--data", str(data), "--d", "1",
                 "--methods", "nn-rr,sir", "--test-fraction", "0.25",
                 *FAST_NN, "--out", str(out)])
    assert code == 0
    doc = json.loads((tmp_path / "cmp.json").read_text())
    assert doc["version"] == "drnn-compare/1"
    assert set(doc["test_mse"]) == {"nn-rr", "sir"}
    assert doc["train_rows"] + doc["test_rows"] == 80
    assert all(v >= 0.0 for v in doc["test_mse"].values())
    assert (tmp_path / "cmp.png").read_bytes()[:4] == b"\x89PNG"


def test_compare_validation(tmp_path):
    data = _generate(tmp_path, n="60")
    assert main(["compare", "--data", str(data), "--d", "1", "--methods", "boop",
                 "--out", str(tmp_path / "x")]) == 2
    assert main(["compare", "--data", str(data), "--d", "0",
                 "--out", str(tmp_path / "x")]) == 2


def test_parser_exit_codes():
    assert main([]) == 2
    assert main(["--help"]) == 0
    assert main(["fit", "--halp"]) == 2
