import numpy as np
import pytest

from curvelatent.autoencoder import MLP, AeConfig, Autoencoder
from curvelatent.errors import Diverged
from curvelatent.reducers import Reducer


def numeric_grads(net, X, h=1e-6):
    out = []
    for p in net.params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            keep = p[idx]
            p[idx] = keep + h
            up, _ = net.loss_and_grads(X, X)
            p[idx] = keep - h
            down, _ = net.loss_and_grads(X, X)
            p[idx] = keep
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    net = MLP([6, 4, 2, 4, 6], 2, rng)
    for b in net.biases:
        b[...] = rng.normal(scale=0.1, size=b.shape)
    X = rng.normal(size=(5, 6))
    _, grads = net.loss_and_grads(X, X)
    for g, n in zip(grads, numeric_grads(net, X)):
        assert np.allclose(g, n, rtol=1e-4, atol=1e-8)


def test_layer_activations():
    net = MLP([3, 4, 2, 4, 3], 2, np.random.default_rng(0))
    # code layer and output are linear, the rest ReLU
    assert [net._relu_after(i) for i in range(4)] == [True, False, True, False]


def test_zero_weights_decode_to_zero():
    model = Autoencoder(2, hidden=(8, 4), epochs=1).fit(np.ones((4, 5)))
    for p in model.net_.params:
        p[...] = 0.0
    assert np.array_equal(model.inverse_transform(np.ones((3, 2))), np.zeros((3, 5)))


def test_shapes_and_round_trip():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(20, 7))
    model = Autoencoder(3, hidden=(10, 5), epochs=5, batch_size=8).fit(X)
    assert model.transform(X).shape == (20, 3)
    assert model.inverse_transform(model.transform(X)).shape == (20, 7)
    again = Reducer.from_dict(model.to_dict())
    assert np.array_equal(again.inverse_transform(again.transform(X)),
                          model.inverse_transform(model.transform(X)))


def test_memorizes_small_set():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(10, 2)) @ rng.normal(size=(2, 12))
    model = Autoencoder(2, hidden=(16, 8), learning_rate=0.01, batch_size=10,
                        epochs=3000, patience=3000, seed=0).fit(X)
    assert np.mean((model.inverse_transform(model.transform(X)) - X) ** 2) < 1e-3


def test_zero_learning_rate_keeps_initial_weights():
    X = np.random.default_rng(3).normal(size=(12, 6))
    model = Autoencoder(2, hidden=(8, 4), learning_rate=0.0, epochs=3, seed=5).fit(X)
    fresh = model._build(6, np.random.default_rng(5))
    for a, b in zip(model.net_.params, fresh.params):
        assert np.array_equal(a, b)


def test_training_is_deterministic():
    X = np.random.default_rng(4).normal(size=(30, 6))
    kw = dict(hidden=(8, 4), epochs=20, batch_size=8, seed=9)
    a = Autoencoder(2, **kw).fit(X)
    b = Autoencoder(2, **kw).fit(X)
    assert np.array_equal(a.transform(X), b.transform(X))
    assert a.history_ == b.history_


def test_divergence_is_reported():
    X = np.random.default_rng(5).normal(size=(16, 6)) * 1e200
    with pytest.raises(Diverged):
        Autoencoder(2, hidden=(8, 4), learning_rate=0.1, epochs=10).fit(X)


def test_loss_goes_down():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(64, 3)) @ rng.normal(size=(3, 10))
    model = Autoencoder(2, hidden=(16, 8), learning_rate=0.001, batch_size=16,
                        epochs=200, patience=200).fit(X)
    h = np.convolve(model.history_, np.ones(10) / 10, mode="valid")
    assert h[-1] < 0.5 * h[0]


def test_config_validation():
    with pytest.raises(ValueError):
        AeConfig(hidden=(8, 16))
    with pytest.raises(ValueError):
        AeConfig(hidden=(8, 2), d=2)
