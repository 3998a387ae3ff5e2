import json

import numpy as np
import pytest

import drnn.selection
from drnn.classical import sir
from drnn.datagen import Dataset, SettingSpec, generate_setting
from drnn.errors import ValidationError
from drnn.metrics import proj_distance
from drnn.network import TrainConfig
from drnn.numerics import RngStream
from drnn.selection import (BenchmarkGrid, cell_label, cv_select_d,
                            default_grid, nn_cell_config, report_to_csv,
                            report_to_json, report_to_plot_csv, run_benchmark,
                            split)


def _tiny_grid(methods=("sir", "save"), replicates=3):
    cells = (SettingSpec(1, 60, 10, 1), SettingSpec(3, 80, 6, 3))
    return BenchmarkGrid(cells=cells, methods=methods, replicates=replicates)


def test_grid_validation():
    with pytest.raises(ValidationError):
        BenchmarkGrid(cells=()).validate()
    with pytest.raises(ValidationError):
        _tiny_grid(methods=("sir", "ols")).validate()
    with pytest.raises(ValidationError):
        _tiny_grid(replicates=0).validate()
    assert len(default_grid().cells) == 12


def test_cell_schedules():
    assert nn_cell_config(SettingSpec(1, 100, 10, 1)).iterations == 1000
    p30 = nn_cell_config(SettingSpec(1, 300, 30, 1))
    assert p30.iterations == 3000 and p30.restarts == 5
    assert nn_cell_config(SettingSpec(2, 200, 10, 2, sigma=0.1)).iterations == 1000
    assert nn_cell_config(SettingSpec(3, 500, 6, 3)).iterations == 2000
    s3 = nn_cell_config(SettingSpec(3, 1000, 6, 3))
    assert s3.iterations == 4000 and s3.restarts == 5
    s4 = nn_cell_config(SettingSpec(4, 1000, 10, 4))
    assert s4.iterations == 4000 and s4.batch == 256
    with pytest.raises(ValidationError):
        nn_cell_config(SettingSpec("toy", 100, 10, 1))


def test_cell_labels():
    assert cell_label(SettingSpec(1, 100, 10, 1)) == "setting1 n=100 p=10"
    assert cell_label(SettingSpec(2, 200, 10, 2, sigma=0.5)) == "setting2 n=200 p=10 sigma=0.5"


def test_benchmark_reruns_are_byte_identical():
    grid = _tiny_grid()
    a = report_to_json(run_benchmark(grid))
    b = report_to_json(run_benchmark(grid))
    assert a == b


def test_threaded_benchmark_matches_serial():
    grid = _tiny_grid()
    serial = report_to_json(run_benchmark(grid, threads=1))
    threaded = report_to_json(run_benchmark(grid, threads=3))
    assert serial == threaded


def test_replicates_share_data_across_methods():
    grid = BenchmarkGrid(cells=(SettingSpec(1, 80, 10, 1),), methods=("sir", "phd"),
                         replicates=2, base_seed=9)
    report = run_benchmark(grid)
    # the data stream is a function of (cell, replicate) only
    data = generate_setting(grid.cells[0], RngStream(9, 1))
    by_hand = proj_distance(sir(data.X, data.y, 1), data.truth)
    rec = next(r for r in report.records
               if r.method == "sir" and r.replicate == 1)
    assert rec.distance == by_hand


def test_method_failure_becomes_an_error_record(monkeypatch):
    def boom(X, y, d, slices=None):
        raise ValidationError("forced failure")
    monkeypatch.setattr(drnn.selection, "sir", boom)
    report = run_benchmark(_tiny_grid(replicates=2))
    sir_records = [r for r in report.records if r.method == "sir"]
    assert all(r.error is not None and r.distance is None for r in sir_records)
    save_records = [r for r in report.records if r.method == "save"]
    assert all(r.error is None for r in save_records)
    sir_aggs = [a for a in report.aggregates if a.method == "sir"]
    assert all(a.count == 0 and a.mean is None for a in sir_aggs)


def test_single_replicate_aggregate_is_flagged():
    grid = BenchmarkGrid(cells=(SettingSpec(1, 60, 10, 1),), methods=("sir",),
                         replicates=1)
    agg = run_benchmark(grid).aggregates[0]
    assert agg.single_replicate and agg.count == 1 and agg.std == 0.0


def test_report_tables():
    report = run_benchmark(_tiny_grid())
    csv_text = report_to_csv(report)
    lines = csv_text.strip().split("\n")
    assert lines[0] == "setting,cell,method,mean,std"
    assert len(lines) == 1 + 2 * 2
    plot = report_to_plot_csv(report).strip().split("\n")
    assert plot[0] == "method,n,mean,std"
    assert len(plot) == len(lines)


def test_report_json_carries_no_wall_times():
    report = run_benchmark(_tiny_grid(replicates=2))
    doc = report_to_json(report)
    assert "wall" not in doc and "time" not in doc
    parsed = json.loads(doc)
    assert parsed["version"] == "drnn-benchmark/1"
    assert len(parsed["rows"]) == 2 * 2 * 2
    assert len(parsed["aggregates"]) == 2 * 2


def test_split_contract():
    data = generate_setting(SettingSpec(1, 103, 10, 1), RngStream(0, 0))
    train_part, test_part = split(data, 0.2, RngStream(1, 0))
    assert test_part.n == 21 and train_part.n == 82
    again_train, again_test = split(data, 0.2, RngStream(1, 0))
    assert np.array_equal(train_part.X, again_train.X)
    merged = np.vstack([train_part.X, test_part.X])
    assert np.unique(merged, axis=0).shape[0] == 103
    assert train_part.truth is data.truth
    with pytest.raises(ValidationError):
        split(data, 0.0, RngStream(1, 0))
    with pytest.raises(ValidationError):
        split(data, 1.0, RngStream(1, 0))
    tiny = Dataset(X=data.X[:4], y=data.y[:4])
    with pytest.raises(ValidationError):
        split(tiny, 0.5, RngStream(1, 0))


def _two_direction_data(n=150, p=4, seed=2):
    st = RngStream(seed, 0)
    X = st.normal((n, p))
    y = X[:, 0] ** 2 + X[:, 1] ** 2 + 0.05 * st.normal(n)
    return Dataset(X=X, y=y)


def test_cv_prefers_the_true_dimension():
    data = _two_direction_data()
    cfg = TrainConfig(iterations=200, restarts=2, h_override=16, seed=0)
    result = cv_select_d(data, (1, 2), k_folds=3, config=cfg)
    assert result.chosen_d == 2
    assert result.mean_mse[1] < result.mean_mse[0]
    assert result.fit.basis.shape == (4, 2)


def test_cv_reports_test_error_and_is_deterministic():
    data = _two_direction_data(n=120)
    train_part, test_part = split(data, 0.25, RngStream(3, 0))
    cfg = TrainConfig(iterations=80, restarts=1, h_override=8, seed=1)
    a = cv_select_d(train_part, (1, 2), k_folds=3, config=cfg, test_data=test_part)
    b = cv_select_d(train_part, (1, 2), k_folds=3, config=cfg, test_data=test_part)
    assert a.final_test_mse == b.final_test_mse
    assert a.chosen_d == b.chosen_d
    assert np.array_equal(a.fit.basis, b.fit.basis)
    assert len(a.mean_mse) == len(a.std_mse) == 2


def test_cv_validation():
    data = _two_direction_data(n=60)
    cfg = TrainConfig(iterations=10, restarts=1, h_override=4)
    with pytest.raises(ValidationError):
        cv_select_d(data, (), config=cfg)
    with pytest.raises(ValidationError):
        cv_select_d(data, (2, 1), config=cfg)
    with pytest.raises(ValidationError):
        cv_select_d(data, (1, 1, 2), config=cfg)
    with pytest.raises(ValidationError):
        cv_select_d(data, (1, 9), config=cfg)
    with pytest.raises(ValidationError):
        cv_select_d(data, (1,), k_folds=1, config=cfg)
    cramped = Dataset(X=data.X[:7], y=data.y[:7])
    with pytest.raises(ValidationError, match="folds too small"):
        cv_select_d(cramped, (1,), k_folds=2, config=cfg)
    bad_test = Dataset(X=data.X[:, :3], y=data.y)
    with pytest.raises(ValidationError):
        cv_select_d(data, (1,), k_folds=3, config=cfg, test_data=bad_test)
