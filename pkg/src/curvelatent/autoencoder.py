"""Symmetric MLP autoencoder trained with minibatch Adam, written on numpy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import Diverged
from .reducers import Reducer

HIDDEN_GRID = ((256, 128), (128, 64), (64, 32), (32, 16), (16, 8))
LEARNING_RATE_GRID = (0.1, 0.01, 0.001, 0.0001)
BATCH_SIZE_GRID = (8, 16, 32, 64, 128)


@dataclass(frozen=True)
class AeConfig:
    hidden: tuple = (32, 16)
    d: int = 2
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 500
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        h1, h2 = self.hidden
        if not h1 > h2 > self.d >= 1:
            raise ValueError("hidden sizes must satisfy h1 > h2 > d >= 1")
        if self.learning_rate < 0 or self.batch_size < 1:
            raise ValueError("learning_rate must be >= 0 and batch_size >= 1")


class MLP:
    """Dense network with ReLU on hidden layers except the code layer.

    ``sizes`` lists layer widths from input to output; ``code_layer`` is the
    index (into ``sizes``) of the linear bottleneck. The output layer is
    always linear.
    """

    def __init__(self, sizes: Sequence[int], code_layer: int, rng: np.random.Generator):
        self.sizes = tuple(int(s) for s in sizes)
        self.code_layer = code_layer
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            limit = np.sqrt(6.0 / fan_in)
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def _relu_after(self, layer: int) -> bool:
        out_index = layer + 1
        return out_index != self.code_layer and out_index != len(self.sizes) - 1

    def forward(self, X, start: int = 0, stop: Optional[int] = None, cache: bool = False):
        stop = len(self.weights) if stop is None else stop
        h = X
        acts = [h]
        for layer in range(start, stop):
            h = h @ self.weights[layer] + self.biases[layer]
            if self._relu_after(layer):
                h = np.maximum(h, 0.0)
            acts.append(h)
        return (h, acts) if cache else h

    def loss_and_grads(self, X, Y):
        """Mean squared error over all entries and its gradients."""
        out, acts = self.forward(X, cache=True)
        diff = out - Y
        loss = float(np.mean(diff ** 2))
        delta = 2.0 * diff / diff.size
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        for layer in reversed(range(len(self.weights))):
            if self._relu_after(layer):
                delta = delta * (acts[layer + 1] > 0)
            gw[layer] = acts[layer].T @ delta
            gb[layer] = delta.sum(axis=0)
            if layer:
                delta = delta @ self.weights[layer].T
        return loss, gw + gb


class Adam:
    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class Autoencoder(Reducer):
    """N -> h1 -> h2 -> d -> h2 -> h1 -> N, trained to reproduce its input."""

    name = "ae"

    def __init__(self, n_components: int = 2, hidden=(32, 16), learning_rate: float = 0.001,
                 batch_size: int = 32, epochs: int = 500, patience: int = 20, seed: int = 0):
        super().__init__(n_components)
        self.config = AeConfig(tuple(int(h) for h in hidden), self.n_components,
                               float(learning_rate), int(batch_size), int(epochs),
                               int(patience), int(seed))

    def get_params(self) -> dict:
        c = self.config
        return {"n_components": c.d, "hidden": list(c.hidden), "learning_rate": c.learning_rate,
                "batch_size": c.batch_size, "epochs": c.epochs, "patience": c.patience,
                "seed": c.seed}

    def _build(self, n_features: int, rng) -> MLP:
        h1, h2 = self.config.hidden
        return MLP([n_features, h1, h2, self.config.d, h2, h1, n_features], 3, rng)

    def fit(self, X, val=None) -> "Autoencoder":
        """Adam on minibatches in a seeded shuffle order, keeping the weights
        with the best validation MSE (early stopping with ``patience``)."""
        cfg = self.config
        X = np.asarray(X, dtype=float)
        V = X if val is None else np.asarray(val, dtype=float)
        if V.shape[0] == 0:
            raise ValueError("validation set is empty")
        rng = np.random.default_rng(cfg.seed)
        self.net_ = net = self._build(X.shape[1], rng)
        opt = Adam(net.params, cfg.learning_rate)
        best = np.inf
        best_params = [p.copy() for p in net.params]
        stale = 0
        self.history_ = []
        for _ in range(cfg.epochs):
            order = rng.permutation(X.shape[0])
            for start in range(0, X.shape[0], cfg.batch_size):
                batch = X[order[start : start + cfg.batch_size]]
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, grads = net.loss_and_grads(batch, batch)
                if not np.isfinite(loss):
                    raise Diverged(f"training loss became {loss} (learning rate {cfg.learning_rate})")
                opt.step(grads)
            val_loss = float(np.mean((net.forward(V) - V) ** 2))
            if not np.isfinite(val_loss):
                raise Diverged(f"validation loss became {val_loss}")
            self.history_.append(val_loss)
            if val_loss < best:
                best, stale = val_loss, 0
                best_params = [p.copy() for p in net.params]
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
        for p, saved in zip(net.params, best_params):
            p[...] = saved
        self.fitted = True
        return self

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        return self.net_.forward(np.asarray(X, dtype=float), 0, 3)

    def inverse_transform(self, Z) -> np.ndarray:
        self._check_fitted()
        return self.net_.forward(np.asarray(Z, dtype=float), 3, None)

    def _state(self) -> dict:
        state = {}
        for i, (w, b) in enumerate(zip(self.net_.weights, self.net_.biases)):
            state[f"W{i}"] = w
            state[f"b{i}"] = b
        return state

    def _set_state(self, state: dict) -> None:
        n_features = state["W0"].shape[0]
        self.net_ = self._build(n_features, np.random.default_rng(0))
        for i in range(len(self.net_.weights)):
            self.net_.weights[i][...] = state[f"W{i}"]
            self.net_.biases[i][...] = state[f"b{i}"]
