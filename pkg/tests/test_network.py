import json

import numpy as np
import pytest

from drnn.datagen import Dataset, SettingSpec, generate_setting
from drnn.errors import DivergenceError, ValidationError
from drnn.metrics import proj_distance
from drnn.network import (Adam, Layer, Model, Sgd, TrainConfig, default_width,
                          forward, forward_chain, init_model, loss_and_grad,
                          make_slot, model_from_json, model_to_json, predict,
                          stiefel_step, toy_diagnostics, train, train_chain,
                          uniform_chain)
from drnn.numerics import RngStream, thin_qr


def _linear_data(n=500, p=5, seed=0):
    X = RngStream(seed, 0).normal((n, p))
    return Dataset(X=X, y=X[:, 0].copy())


def test_default_width_schedule():
    assert default_width(100) == 64
    assert default_width(999) == 64
    assert default_width(1000) == 128
    assert default_width(2000) == 128


def test_init_model_contract():
    model = init_model(7, 2, 8, RngStream(1, 0))
    assert model.p == 7 and model.d == 2
    assert np.allclose(model.basis.T @ model.basis, np.eye(2), atol=1e-12)
    dims = [l.W.shape for l in model.layers]
    assert dims == [(2, 8), (8, 4), (4, 1)]
    assert all(l.b is not None for l in model.layers)
    assert [l.relu for l in model.layers] == [True, True, False]
    with_extra = init_model(7, 2, 8, RngStream(1, 0), extra_inputs=1)
    assert with_extra.layers[0].W.shape == (3, 8)
    with pytest.raises(ValidationError):
        init_model(3, 4, 8, RngStream(1, 0))
    with pytest.raises(ValidationError):
        init_model(5, 2, 7, RngStream(1, 0))


def test_uniform_chain_scale_bound():
    layers = uniform_chain([6, 8, 4, 1], RngStream(2, 0))
    for fan_in, layer in zip([6, 8, 4], layers):
        bound = 1.0 / np.sqrt(fan_in)
        assert np.abs(layer.W).max() <= bound
        assert np.abs(layer.b).max() <= bound
    assert [l.relu for l in layers] == [True, True, False]


def test_forward_validates_shapes():
    model = init_model(4, 1, 4, RngStream(3, 0))
    X = RngStream(3, 1).normal((10, 4))
    out = forward(model, X)
    assert out.shape == (10,)
    assert np.array_equal(predict(model, X), out)
    with pytest.raises(ValidationError):
        forward(model, X[:, :3])


def test_exact_fit_has_zero_loss_and_zero_gradients():
    model = init_model(4, 2, 6, RngStream(4, 0))
    X = RngStream(4, 1).normal((12, 4))
    y = forward(model, X)
    loss, grads = loss_and_grad(model, X, y)
    assert loss == 0.0
    assert np.all(grads.basis == 0.0)
    for dw, db in grads.layers:
        assert np.all(dw == 0.0) and np.all(db == 0.0)


def test_single_sample_linear_gradient_oracle():
    # d/dw of (y - w x)^2 at w=0, x=1, y=1 is -2
    model = Model(basis=np.array([[1.0]]),
                  layers=[Layer(W=np.array([[0.0]]), b=np.array([0.0]), relu=False)])
    loss, grads = loss_and_grad(model, np.array([[1.0]]), np.array([1.0]))
    assert loss == 1.0
    assert grads.layers[0][0][0, 0] == -2.0
    assert grads.layers[0][1][0] == -2.0


def _param_views(model):
    views = [model.basis]
    for layer in model.layers:
        views.append(layer.W)
        if layer.b is not None:
            views.append(layer.b)
    return views


def _min_relu_margin(model, X):
    _, caches = forward_chain(model.layers, X @ model.basis)
    margins = [np.abs(pre).min() for layer, (_, pre) in zip(model.layers, caches)
               if layer.relu]
    return min(margins) if margins else np.inf


def test_gradients_match_central_finite_differences():
    # ReLU kinks make the loss piecewise smooth; instances with a hidden
    # pre-activation within 1e-4 of zero are resampled because finite
    # differences straddle the kink there and disagree at O(1).
    step = 1e-5
    accepted = 0
    attempt = 0
    worst = 0.0
    while accepted < 20:
        attempt += 1
        assert attempt < 400, "could not find enough kink-free instances"
        st = RngStream(1000 + attempt, 0)
        p = int(st.integers(1, 5, ()))
        d = int(st.integers(1, p + 1, ()))
        h = 2 * int(st.integers(1, 4, ()))
        n = int(st.integers(1, 9, ()))
        model = init_model(p, d, h, st)
        X = st.normal((n, p))
        y = st.normal(n)
        if _min_relu_margin(model, X) < 1e-4:
            continue
        accepted += 1
        _, grads = loss_and_grad(model, X, y)
        flat_grads = [grads.basis] + [g for pair in grads.layers for g in pair
                                      if g is not None]
        for param, grad in zip(_param_views(model), flat_grads):
            for idx in np.ndindex(param.shape):
                keep = param[idx]
                param[idx] = keep + step
                up = loss_and_grad(model, X, y)[0]
                param[idx] = keep - step
                down = loss_and_grad(model, X, y)[0]
                param[idx] = keep
                fd = (up - down) / (2.0 * step)
                scale = max(abs(fd), abs(grad[idx]))
                if scale < 1e-10:
                    continue
                rel = abs(fd - grad[idx]) / max(scale, 1e-8)
                worst = max(worst, rel)
                assert rel < 1e-4, (idx, fd, grad[idx])
    assert worst < 1e-4


def test_stiefel_step_zero_gradient_is_a_fixed_point():
    basis = thin_qr(RngStream(5, 0).normal((6, 2)))[0]
    slot = make_slot(Sgd(momentum=0.0), basis.shape)
    out, warned = stiefel_step(basis, np.zeros_like(basis), slot, 0.1)
    assert warned == 0
    assert np.allclose(out, basis, atol=1e-14)


def test_stiefel_step_stays_on_manifold():
    st = RngStream(6, 0)
    for optimizer in (Sgd(momentum=0.9), Adam()):
        basis = thin_qr(st.normal((8, 3)))[0]
        slot = make_slot(optimizer, basis.shape)
        for _ in range(50):
            grad = st.normal(basis.shape)
            basis, _ = stiefel_step(basis, grad, slot, 0.05)
            defect = np.linalg.norm(basis.T @ basis - np.eye(3))
            assert defect < 1e-10


def test_stiefel_step_single_column_normalization_oracle():
    basis = np.array([[1.0], [0.0]])
    delta = 0.3
    slot = make_slot(Sgd(momentum=0.0), basis.shape)
    out, _ = stiefel_step(basis, np.array([[0.0], [-delta]]), slot, 1.0)
    expect = np.array([[1.0], [delta]]) / np.sqrt(1.0 + delta * delta)
    assert np.allclose(out, expect, atol=1e-14)


def test_stiefel_step_repairs_collapsed_columns():
    basis = np.eye(4)[:, :2]
    # this ambient step lands both columns on the same vector
    grad = (basis[:, 1] - basis[:, 0])[:, None] @ np.array([[0.0, 1.0]])
    slot = make_slot(Sgd(momentum=0.0), basis.shape)
    out, warned = stiefel_step(basis, grad, slot, 1.0)
    assert warned >= 1
    assert np.allclose(out.T @ out, np.eye(2), atol=1e-10)


def test_train_is_bit_deterministic():
    data = generate_setting(SettingSpec(1, 80, 10, 1), RngStream(7, 0))
    cfg = TrainConfig(iterations=120, seed=3, restarts=2)
    a = train(data, 1, cfg)
    b = train(data, 1, cfg)
    assert np.array_equal(a.basis, b.basis)
    assert np.array_equal(a.loss_trace, b.loss_trace)
    assert a.final_train_mse == b.final_train_mse
    assert a.selected_restart == b.selected_restart


def test_train_recovers_noiseless_linear_truth():
    data = _linear_data()
    result = train(data, 1, TrainConfig(seed=1))
    assert result.final_train_mse < 1e-3
    assert proj_distance(result.basis, np.eye(5)[:, :1]) < 0.05


def test_loss_trace_decays_on_quartic_runs():
    for rep in range(3):
        data = generate_setting(SettingSpec(1, 100, 10, 1), RngStream(8, rep))
        result = train(data, 1, TrainConfig(seed=rep))
        trace = result.loss_trace
        quarter = len(trace) // 4
        assert trace[-quarter:].mean() <= trace[:quarter].mean()


def test_train_reports_stiefel_residual_within_tolerance():
    data = generate_setting(SettingSpec(1, 60, 10, 1), RngStream(9, 0))
    # warm_fraction 0 makes every iteration a constrained step
    result = train(data, 1, TrainConfig(iterations=150, warm_fraction=0.0, seed=2))
    assert 0.0 <= result.stiefel_max_residual < 1e-8
    assert np.allclose(result.basis.T @ result.basis, np.eye(1), atol=1e-10)


def test_train_output_is_orthonormal_on_raw_scale():
    data = generate_setting(SettingSpec(3, 90, 6, 3), RngStream(10, 0))
    result = train(data, 3, TrainConfig(iterations=150, seed=4))
    assert np.allclose(result.basis.T @ result.basis, np.eye(3), atol=1e-10)
    # the trace is reported on the raw response scale
    assert result.loss_trace.shape == (150,)
    assert result.final_train_mse >= 0.0


def test_trained_model_predicts_on_raw_coordinates():
    data = _linear_data(n=300)
    result = train(data, 1, TrainConfig(iterations=400, seed=5))
    pred = forward(result.model, data.X)
    assert np.mean((pred - data.y) ** 2) == pytest.approx(result.final_train_mse)


def test_sign_flip_of_init_mirrors_the_fit_exactly():
    # negating the basis and the first dense layer leaves the represented
    # function unchanged, and every optimizer operation is sign-symmetric
    data = generate_setting(SettingSpec(1, 70, 10, 1), RngStream(11, 0))
    base = init_model(10, 1, 16, RngStream(11, 1))
    flipped = base.copy()
    flipped.basis = -flipped.basis
    flipped.layers[0].W = -flipped.layers[0].W
    cfg = TrainConfig(iterations=200, seed=6)
    a = train(data, 1, cfg, init=base)
    b = train(data, 1, cfg, init=flipped)
    assert np.array_equal(a.basis, -b.basis)
    assert proj_distance(a.basis, b.basis) < 1e-12


def test_axis_flip_equivariance_for_two_directions():
    data = generate_setting(SettingSpec(3, 80, 6, 3), RngStream(12, 0))
    base = init_model(6, 2, 8, RngStream(12, 1))
    S = np.diag([1.0, -1.0])
    rotated = base.copy()
    rotated.basis = base.basis @ S
    rotated.layers[0].W = S @ base.layers[0].W
    cfg = TrainConfig(iterations=200, seed=7)
    a = train(data, 2, cfg, init=base)
    b = train(data, 2, cfg, init=rotated)
    assert proj_distance(a.basis, b.basis) < 1e-10


def test_rotation_equivariance_of_span_through_the_warm_phase():
    # a general rotation of the init commutes with unconstrained steps and
    # with one QR retraction; plain SGD only (Adam rescales coordinates)
    data = generate_setting(SettingSpec(3, 80, 6, 3), RngStream(13, 0))
    base = init_model(6, 2, 8, RngStream(13, 1))
    Q = thin_qr(RngStream(13, 2).normal((2, 2)))[0]
    rotated = base.copy()
    rotated.basis = base.basis @ Q
    rotated.layers[0].W = Q.T @ base.layers[0].W
    iters = 150
    cfg = TrainConfig(iterations=iters, warm_fraction=(iters - 1) / iters, seed=8)
    a = train(data, 2, cfg, init=base)
    b = train(data, 2, cfg, init=rotated)
    assert proj_distance(a.basis, b.basis) < 1e-8


def test_holdout_selection_is_deterministic_and_on_manifold():
    data = generate_setting(SettingSpec(1, 100, 10, 1), RngStream(14, 0))
    cfg = TrainConfig(iterations=120, seed=9, restarts=2, selection="holdout")
    a = train(data, 1, cfg)
    b = train(data, 1, cfg)
    assert np.array_equal(a.basis, b.basis)
    assert a.selected_restart in (0, 1)


def test_tiny_samples_fall_back_to_train_selection():
    data = generate_setting(SettingSpec(1, 12, 10, 1), RngStream(15, 0))
    held = train(data, 1, TrainConfig(iterations=60, seed=1, restarts=2,
                                      selection="holdout"))
    plain = train(data, 1, TrainConfig(iterations=60, seed=1, restarts=2))
    assert np.array_equal(held.basis, plain.basis)


def test_divergence_error_carries_the_trace_prefix():
    data = _linear_data(n=50)
    cfg = TrainConfig(iterations=200, learning_rate=1e9, restarts=2, seed=0,
                      cosine_decay=False)
    with pytest.raises(DivergenceError) as err:
        train(data, 1, cfg)
    assert err.value.iteration >= 0
    assert isinstance(err.value.loss_prefix, list)


def test_train_validates_dimension():
    data = _linear_data(n=30)
    with pytest.raises(ValidationError):
        train(data, 0)
    with pytest.raises(ValidationError):
        train(data, 6)


def test_h_override_changes_architecture():
    data = _linear_data(n=60)
    result = train(data, 1, TrainConfig(iterations=50, h_override=8, seed=2))
    assert [l.W.shape for l in result.model.layers] == [(1, 8), (8, 4), (4, 1)]


def test_train_chain_reduces_error():
    st = RngStream(16, 0)
    X = st.normal((200, 3))
    y = X @ np.array([1.0, -2.0, 0.5])
    layers = uniform_chain([3, 16, 8, 1], RngStream(16, 1))
    layers, trace, final = train_chain(layers, X, y, TrainConfig(iterations=400, seed=3))
    assert final < trace[0]
    assert final < 0.05


def test_toy_diagnostics_contract_with_cheap_config():
    cfg = TrainConfig(iterations=50, seed=0)
    rows = toy_diagnostics(200, [1, 5, 10], RngStream(17, 0), config=cfg)
    assert [r.q for r in rows] == [1, 5, 10]
    for row in rows:
        assert 0.0 <= row.cosine_projection <= 1.0
        assert 0.0 <= row.cosine_leading_eigvec <= 1.0
    # a 10 x 10 factor is generically full rank, so the projection is exact
    assert rows[-1].cosine_projection > 1.0 - 1e-6
    with pytest.raises(ValidationError):
        toy_diagnostics(100, [0, 1], RngStream(17, 1), config=cfg)


def test_model_json_roundtrip_is_exact():
    model = init_model(5, 2, 6, RngStream(18, 0))
    doc = model_to_json(model, TrainConfig(seed=11, selection="holdout"))
    back = model_from_json(doc)
    assert np.array_equal(back.basis, model.basis)
    for a, b in zip(back.layers, model.layers):
        assert np.array_equal(a.W, b.W) and np.array_equal(a.b, b.b)
        assert a.relu == b.relu
    parsed = json.loads(doc)
    assert parsed["config"]["selection"] == "holdout"
    assert parsed["architecture"] == [5, 2, 6, 3, 1]


def test_model_json_rejects_unknown_version():
    model = init_model(3, 1, 4, RngStream(19, 0))
    doc = json.loads(model_to_json(model))
    doc["version"] = "drnn-model/999"
    with pytest.raises(ValidationError):
        model_from_json(json.dumps(doc))
