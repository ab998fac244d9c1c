import math

import numpy as np
import pytest

from vidsal.errors import InvalidArgument, MalformedInput
from vidsal.unary import (MlpLayer, MlpModel, TrainConfig, fallback_omega,
                          fdnn_model, forward, forward_batch, init_model,
                          load_model, load_training_data, loss_and_grads,
                          save_model, save_training_data, train,
                          unary_potential)


def tiny_model(weights, bias):
    return MlpModel(layers=[MlpLayer(weights=np.asarray(weights, float),
                                     bias=np.asarray(bias, float),
                                     activation="none")])


# ---- forward ----------------------------------------------------------------

def test_zero_model_gives_half_half(rng):
    model = init_model(4, (8,), rng)
    for layer in model.layers:
        layer.weights[:] = 0.0
        layer.bias[:] = 0.0
    p_fg, p_bg = forward(model, np.ones(4))
    assert p_fg == pytest.approx(0.5)
    assert p_bg == pytest.approx(0.5)


def test_single_layer_softmax_derived():
    model = tiny_model([[1.0], [-1.0]], [0.0, 0.0])
    p_fg, p_bg = forward(model, [2.0])
    expected = math.exp(2.0) / (math.exp(2.0) + math.exp(-2.0))
    assert p_fg == pytest.approx(expected, rel=1e-12)
    assert p_fg + p_bg == pytest.approx(1.0)


def test_forward_deterministic(rng):
    model = init_model(6, (8, 8), rng)
    x = rng.standard_normal(6)
    assert forward(model, x) == forward(model, x)


def test_forward_dim_mismatch(rng):
    model = init_model(6, (4,), rng)
    with pytest.raises(InvalidArgument):
        forward(model, np.ones(5))


def test_forward_valid_distribution(rng):
    model = init_model(5, (16, 16), rng)
    X = rng.standard_normal((40, 5)) * 100
    probs = forward_batch(model, X)
    assert np.all(probs >= 0)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_fdnn_architecture():
    model = fdnn_model()
    assert model.input_dim == 8192
    dims = [l.weights.shape[0] for l in model.layers]
    assert dims == [2048, 2048, 2048, 1024, 1024, 1024, 2]
    assert [l.activation for l in model.layers] == ["relu"] * 6 + ["none"]
    assert [l.dropout for l in model.layers] == [True] * 5 + [False, False]


# ---- unary potential ---------------------------------------------------------

def test_unary_confident_foreground_free():
    assert unary_potential(1.0, 1, 50.0) == 0.0


def test_unary_symmetric_at_half():
    assert unary_potential(0.5, 1, 50.0) == unary_potential(0.5, 0, 50.0) == 25.0


def test_unary_derived_example():
    assert unary_potential(0.8, 1, 50.0) == pytest.approx(10.0)
    assert unary_potential(0.8, 0, 50.0) == pytest.approx(40.0)


@pytest.mark.parametrize("omega", np.linspace(0, 1, 11))
def test_unary_label_costs_sum_to_theta(omega):
    total = unary_potential(omega, 1, 50.0) + unary_potential(omega, 0, 50.0)
    assert total == pytest.approx(50.0)


# ---- fallback omega ----------------------------------------------------------

def test_fallback_at_fg_centroid():
    assert fallback_omega(np.array([1.0, 0.0]), [1.0, 0.0], [0.0, 1.0]) == 1.0


def test_fallback_equidistant():
    assert fallback_omega(np.array([0.5, 0.5]), [1.0, 0.0], [0.0, 1.0]) == 0.5


def test_fallback_coincident_centroids():
    assert fallback_omega(np.array([3.0]), [3.0], [3.0]) == 0.5


def test_fallback_derived_ratio():
    # d_fg = 1, d_bg = 3 -> 0.75
    assert fallback_omega(np.array([1.0, 0.0]), [1.0, 1.0], [1.0, -3.0]) == \
        pytest.approx(0.75)


# ---- gradients ----------------------------------------------------------------

def _numeric_grads(model, X, targets, eps=1e-6):
    grads = []
    for layer in model.layers:
        gw = np.zeros_like(layer.weights)
        it = np.nditer(layer.weights, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = layer.weights[idx]
            layer.weights[idx] = orig + eps
            up, _ = loss_and_grads(model, X, targets)
            layer.weights[idx] = orig - eps
            down, _ = loss_and_grads(model, X, targets)
            layer.weights[idx] = orig
            gw[idx] = (up - down) / (2 * eps)
            it.iternext()
        gb = np.zeros_like(layer.bias)
        for i in range(layer.bias.size):
            orig = layer.bias[i]
            layer.bias[i] = orig + eps
            up, _ = loss_and_grads(model, X, targets)
            layer.bias[i] = orig - eps
            down, _ = loss_and_grads(model, X, targets)
            layer.bias[i] = orig
            gb[i] = (up - down) / (2 * eps)
        grads.append((gw, gb))
    return grads


def _sample_checkable_model(rng, max_dim=9):
    """Random small model and batch staying clear of ReLU kinks, so central
    differences are trustworthy."""
    while True:
        dims = tuple(int(d) for d in rng.integers(2, max_dim, size=2))
        model = init_model(int(rng.integers(2, max_dim)), dims, rng)
        for layer in model.layers:
            layer.bias[:] = rng.normal(0.0, 0.1, layer.bias.shape)
        X = rng.standard_normal((6, model.input_dim))
        a = X
        min_abs = np.inf
        for layer in model.layers:
            z = a @ layer.weights.T + layer.bias
            if layer.activation == "relu":
                min_abs = min(min_abs, float(np.abs(z).min()))
                a = np.maximum(z, 0.0)
            else:
                a = z
        if min_abs > 1e-3:
            return model, X


def test_gradient_check_small_models():
    rng = np.random.default_rng(42)
    for _ in range(5):
        model, X = _sample_checkable_model(rng)
        targets = rng.integers(0, 2, 6)
        _, analytic = loss_and_grads(model, X, targets)
        numeric = _numeric_grads(model, X, targets)
        for (aw, ab), (nw, nb) in zip(analytic, numeric):
            a = np.concatenate([aw.ravel(), ab.ravel()])
            n = np.concatenate([nw.ravel(), nb.ravel()])
            rel = np.linalg.norm(a - n) / max(np.linalg.norm(a),
                                              np.linalg.norm(n), 1e-12)
            assert rel <= 1e-4


# ---- training -----------------------------------------------------------------

def separable_blobs(n=200, seed=5):
    rng = np.random.default_rng(seed)
    fg = rng.normal((2.0, 2.0), 0.4, size=(n // 2, 2))
    bg = rng.normal((-2.0, -2.0), 0.4, size=(n // 2, 2))
    X = np.vstack([fg, bg])
    y = np.array([1] * (n // 2) + [0] * (n // 2))
    return X, y


def test_train_separable_blobs_high_accuracy():
    X, y = separable_blobs()
    cfg = TrainConfig(iterations=2000, batch_size=64, lr_drop_every=1000,
                      dropout_rate=0.0, rng_seed=3)
    model, _ = train(X, y, cfg, hidden=(8,))
    probs = forward_batch(model, X)
    predicted_fg = probs[:, 0] > 0.5
    accuracy = np.mean(predicted_fg == (y == 1))
    assert accuracy >= 0.99


def test_train_loss_trace_non_increasing_smoothed():
    X, y = separable_blobs()
    cfg = TrainConfig(iterations=2000, batch_size=64, lr_drop_every=1000,
                      dropout_rate=0.0, rng_seed=3)
    _, trace = train(X, y, cfg, hidden=(8,))
    windows = trace[:2000].reshape(-1, 100).mean(axis=1)
    # tiny allowance for SGD jitter once converged
    assert np.all(np.diff(windows) <= 1e-3)


def test_train_huge_weight_decay_collapses_to_half():
    X, y = separable_blobs(n=64)
    cfg = TrainConfig(iterations=400, batch_size=32, weight_decay=10.0,
                      lr_drop_every=400, dropout_rate=0.0, rng_seed=0)
    model, _ = train(X, y, cfg, hidden=(4,))
    p_fg, p_bg = forward(model, X[0])
    assert p_fg == pytest.approx(0.5, abs=1e-3)
    total = sum(np.abs(l.weights).sum() for l in model.layers)
    assert total < 0.05


def test_train_seed_reproducibility():
    X, y = separable_blobs(n=80)
    cfg = TrainConfig(iterations=300, batch_size=16, lr_drop_every=100,
                      rng_seed=9)
    m1, t1 = train(X, y, cfg, hidden=(6, 6))
    m2, t2 = train(X, y, cfg, hidden=(6, 6))
    assert np.array_equal(t1, t2)
    for l1, l2 in zip(m1.layers, m2.layers):
        assert np.array_equal(l1.weights, l2.weights)
        assert np.array_equal(l1.bias, l2.bias)


def test_train_rejects_empty_and_bad_labels():
    with pytest.raises(InvalidArgument):
        train(np.zeros((0, 2)), np.zeros(0), TrainConfig())
    with pytest.raises(InvalidArgument):
        train(np.zeros((4, 2)), np.array([0, 1, 2, 1]), TrainConfig())


def test_desk_preset():
    cfg = TrainConfig.desk()
    assert cfg.iterations == 5000
    assert cfg.batch_size == 64


def test_train_config_validation():
    with pytest.raises(InvalidArgument):
        TrainConfig(iterations=0)
    with pytest.raises(InvalidArgument):
        TrainConfig(dropout_rate=1.0)


# ---- model file ----------------------------------------------------------------

def test_model_round_trip(tmp_path, rng):
    model = init_model(7, (5, 3), rng)
    path = tmp_path / "m.stnn"
    save_model(model, path)
    loaded = load_model(path)
    assert len(loaded.layers) == 3
    for a, b in zip(model.layers, loaded.layers):
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-7)
        assert a.activation == b.activation
        assert a.dropout == b.dropout
    x = rng.standard_normal(7)
    np.testing.assert_allclose(forward(model, x), forward(loaded, x),
                               atol=1e-5)


def test_model_bad_magic(tmp_path):
    path = tmp_path / "bad.stnn"
    path.write_bytes(b"WHAT" + b"\x00" * 10)
    with pytest.raises(MalformedInput, match="magic"):
        load_model(path)


def test_training_data_round_trip(tmp_path, rng):
    vectors = {(0, f, r): rng.standard_normal(5).astype(np.float32)
               for f in range(3) for r in range(2)}
    labels = {k: int(rng.integers(0, 2)) for k in vectors}
    path = tmp_path / "train.stft"
    save_training_data(vectors, labels, path)
    X, y = load_training_data(path)
    assert X.shape == (6, 5)
    keys = sorted(vectors)
    np.testing.assert_array_equal(y, [labels[k] for k in keys])
    np.testing.assert_allclose(X, np.stack([vectors[k] for k in keys]),
                               atol=1e-7)
