"""UMAP: fuzzy neighbourhood graph, SGD layout, out-of-sample projection and
an interpolating inverse map.

Neighbour search is exact (brute force) and the layout SGD runs on a single
thread in a fixed edge order, so a fit is fully determined by its seed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numba
import numpy as np
import scipy.sparse as sp
from scipy.optimize import curve_fit
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .reducers import Reducer

METRICS = {"euclidean": "euclidean", "manhattan": "cityblock", "chebyshev": "chebyshev"}
SIGMA_BRACKET = (1e-12, 1e12)
SPREAD = 1.0


@dataclass(frozen=True)
class UmapConfig:
    n_neighbors: int = 15
    min_dist: float = 0.1
    metric: str = "euclidean"
    n_components: int = 2
    n_epochs: int = 200
    transform_epochs: int = 30
    negative_sample_rate: int = 5
    learning_rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_neighbors < 2:
            raise ValueError("n_neighbors must be at least 2")
        if not 0 < self.min_dist < SPREAD:
            raise ValueError("min_dist must lie in (0, spread)")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}; expected one of {list(METRICS)}")


@dataclass(frozen=True, eq=False)
class FuzzyGraph:
    rho: np.ndarray
    sigma: np.ndarray
    weights: sp.csr_matrix


def pairwise_distances(X, Y, metric: str) -> np.ndarray:
    return cdist(np.asarray(X, dtype=float), np.asarray(Y, dtype=float), METRICS[metric])


def knn(X, k: int, metric: str = "euclidean", query=None):
    """Exact k nearest neighbours, ties to the lower index.

    Without ``query`` the neighbours of the rows of ``X`` among themselves are
    returned, each row excluding itself.
    """
    X = np.asarray(X, dtype=float)
    self_query = query is None
    D = pairwise_distances(X if self_query else query, X, metric)
    if self_query:
        if k >= X.shape[0]:
            raise ValueError(f"k={k} needs more than {X.shape[0]} points")
        np.fill_diagonal(D, np.inf)
    order = np.argsort(D, axis=1, kind="stable")[:, :k]
    return order, np.take_along_axis(D, order, axis=1)


def smooth_knn(distances, k: Optional[int] = None, n_iter: int = 64):
    """Per-row ``rho`` (nearest distance) and bandwidth ``sigma``.

    ``sigma`` solves ``sum_j exp(-max(0, d_j - rho) / sigma) = log2(k)`` by
    bisection on a log scale inside :data:`SIGMA_BRACKET`. Rows whose
    distances all equal ``rho`` cannot reach the target and get the bracket
    minimum.
    """
    d = np.atleast_2d(np.asarray(distances, dtype=float))
    k = k or d.shape[1]
    if k < 2:
        raise ValueError("smooth_knn needs k >= 2")
    target = np.log2(k)
    rho = d.min(axis=1)
    excess = np.maximum(d - rho[:, None], 0.0)
    lo = np.full(d.shape[0], SIGMA_BRACKET[0])
    hi = np.full(d.shape[0], SIGMA_BRACKET[1])
    for _ in range(n_iter):
        mid = np.sqrt(lo * hi)
        total = np.exp(-excess / mid[:, None]).sum(axis=1)
        above = total > target
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    sigma = np.sqrt(lo * hi)
    sigma[np.all(excess == 0.0, axis=1)] = SIGMA_BRACKET[0]
    return rho, sigma


def memberships(distances, rho, sigma) -> np.ndarray:
    d = np.atleast_2d(np.asarray(distances, dtype=float))
    return np.exp(-np.maximum(d - rho[:, None], 0.0) / sigma[:, None])


def t_conorm(a, b):
    """Probabilistic fuzzy union ``a + b - a*b`` (dense or sparse)."""
    if sp.issparse(a):
        return (a + b - a.multiply(b)).tocsr()
    return a + b - a * b


def fuzzy_union(directed) -> sp.csr_matrix:
    directed = sp.csr_matrix(directed)
    W = t_conorm(directed, directed.T.tocsr())
    W.setdiag(0.0)
    W.eliminate_zeros()
    W.sort_indices()
    return W


def fuzzy_graph(X, k: int, metric: str = "euclidean") -> FuzzyGraph:
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    idx, dist = knn(X, k, metric)
    rho, sigma = smooth_knn(dist, k)
    vals = memberships(dist, rho, sigma)
    rows = np.repeat(np.arange(n), k)
    A = sp.csr_matrix((vals.ravel(), (rows, idx.ravel())), shape=(n, n))
    return FuzzyGraph(rho, sigma, fuzzy_union(A))


def fit_ab(min_dist: float, spread: float = SPREAD):
    """Least-squares fit of ``1 / (1 + a t^(2b))`` to the offset exponential.

    Returns ``(a, b, residual)`` where ``residual`` is the sum of squared
    errors on the fitting grid ``t in [0, 3 * spread]``.
    """

    def curve(t, a, b):
        return 1.0 / (1.0 + a * t ** (2 * b))

    t = np.linspace(0, spread * 3, 300)
    target = np.where(t < min_dist, 1.0, np.exp(-(t - min_dist) / spread))
    (a, b), _ = curve_fit(curve, t, target, p0=(1.0, 1.0))
    residual = float(np.sum((curve(t, a, b) - target) ** 2))
    return float(a), float(b), residual


def spectral_init(W: sp.csr_matrix, d: int, rng: np.random.Generator) -> np.ndarray:
    """Eigenvectors of the normalized Laplacian scaled into [-10, 10];
    uniform random when the graph is disconnected or too small."""
    n = W.shape[0]
    n_comp, _ = connected_components(W, directed=False)
    if n_comp == 1 and n > d + 1:
        deg = np.asarray(W.sum(axis=1)).ravel()
        inv_sqrt = 1.0 / np.sqrt(deg)
        L = np.eye(n) - (inv_sqrt[:, None] * W.toarray() * inv_sqrt[None, :])
        try:
            evals, evecs = np.linalg.eigh(L)
        except np.linalg.LinAlgError:
            evecs = None
        if evecs is not None:
            coords = evecs[:, 1 : d + 1]
            idx = np.argmax(np.abs(coords), axis=0)
            coords = coords * np.sign(coords[idx, np.arange(d)])
            return 10.0 * coords / np.abs(coords).max()
    return rng.uniform(-10.0, 10.0, size=(n, d))


@numba.njit(cache=True)
def _clip(value):
    if value > 4.0:
        return 4.0
    if value < -4.0:
        return -4.0
    return value


@numba.njit(cache=True)
def _optimize_layout(head_emb, tail_emb, head, tail, epochs_per_sample, n_epochs,
                     a, b, seed, initial_alpha, negative_sample_rate, move_other):
    np.random.seed(seed)
    n_edges = head.shape[0]
    dim = head_emb.shape[1]
    n_tail = tail_emb.shape[0]
    epochs_per_negative = epochs_per_sample / negative_sample_rate
    next_negative = epochs_per_negative.copy()
    next_sample = epochs_per_sample.copy()
    for n in range(n_epochs):
        alpha = initial_alpha * (1.0 - n / n_epochs)
        for i in range(n_edges):
            if next_sample[i] > n:
                continue
            j = head[i]
            k = tail[i]
            dist_sq = 0.0
            for dd in range(dim):
                diff = head_emb[j, dd] - tail_emb[k, dd]
                dist_sq += diff * diff
            if dist_sq > 0.0:
                coeff = -2.0 * a * b * dist_sq ** (b - 1.0) / (a * dist_sq ** b + 1.0)
            else:
                coeff = 0.0
            for dd in range(dim):
                grad = _clip(coeff * (head_emb[j, dd] - tail_emb[k, dd]))
                head_emb[j, dd] += grad * alpha
                if move_other:
                    tail_emb[k, dd] -= grad * alpha
            next_sample[i] += epochs_per_sample[i]

            n_neg = int((n - next_negative[i]) / epochs_per_negative[i])
            for _ in range(n_neg):
                k = np.random.randint(n_tail)
                if move_other and k == j:
                    continue
                dist_sq = 0.0
                for dd in range(dim):
                    diff = head_emb[j, dd] - tail_emb[k, dd]
                    dist_sq += diff * diff
                if dist_sq > 0.0:
                    coeff = 2.0 * b / ((0.001 + dist_sq) * (a * dist_sq ** b + 1.0))
                else:
                    coeff = 0.0
                for dd in range(dim):
                    if coeff > 0.0:
                        head_emb[j, dd] += _clip(coeff * (head_emb[j, dd] - tail_emb[k, dd])) * alpha
            next_negative[i] += n_neg * epochs_per_negative[i]
    return head_emb


def _edges(W: sp.csr_matrix, n_epochs: int):
    coo = W.tocoo()
    keep = coo.data >= coo.data.max() / n_epochs
    head = coo.row[keep].astype(np.int64)
    tail = coo.col[keep].astype(np.int64)
    weights = coo.data[keep]
    return head, tail, weights.max() / weights


def embed(W: sp.csr_matrix, a: float, b: float, d: int, n_epochs: int = 200,
          seed: int = 0, init: Optional[np.ndarray] = None, learning_rate: float = 1.0,
          negative_sample_rate: int = 5) -> np.ndarray:
    """SGD layout of graph ``W``: edges attract, random negative samples repel.

    Edges are visited in row-major order and each is sampled at a rate
    proportional to its membership weight.
    """
    rng = np.random.default_rng(seed)
    emb = spectral_init(W, d, rng) if init is None else np.array(init, dtype=float)
    emb = np.ascontiguousarray(emb, dtype=np.float64)
    if W.nnz == 0:
        return emb
    head, tail, eps = _edges(W, n_epochs)
    return _optimize_layout(emb, emb, head, tail, eps.astype(np.float64), n_epochs,
                            float(a), float(b), int(seed) % (2 ** 32),
                            float(learning_rate), float(negative_sample_rate), True)


class UMAP(Reducer):
    name = "umap"

    def __init__(self, n_components: int = 2, n_neighbors: int = 15, min_dist: float = 0.1,
                 metric: str = "euclidean", n_epochs: int = 200, transform_epochs: int = 30,
                 negative_sample_rate: int = 5, learning_rate: float = 1.0, seed: int = 0):
        super().__init__(n_components)
        self.config = UmapConfig(int(n_neighbors), float(min_dist), metric, self.n_components,
                                 int(n_epochs), int(transform_epochs),
                                 int(negative_sample_rate), float(learning_rate), int(seed))

    def get_params(self) -> dict:
        return asdict(self.config)

    def fit(self, X, val=None) -> "UMAP":
        cfg = self.config
        X = np.asarray(X, dtype=float)
        self.X_fit_ = X
        self.graph_ = fuzzy_graph(X, cfg.n_neighbors, cfg.metric)
        self.a_, self.b_, _ = fit_ab(cfg.min_dist)
        self.embedding_ = embed(self.graph_.weights, self.a_, self.b_, cfg.n_components,
                                cfg.n_epochs, cfg.seed, learning_rate=cfg.learning_rate,
                                negative_sample_rate=cfg.negative_sample_rate)
        self.fitted = True
        return self

    def transform(self, X) -> np.ndarray:
        """Place new rows at the membership-weighted mean of their training
        neighbours, then refine against the fixed training layout."""
        self._check_fitted()
        cfg = self.config
        X = np.asarray(X, dtype=float)
        k = min(cfg.n_neighbors, self.X_fit_.shape[0])
        idx, dist = knn(self.X_fit_, k, cfg.metric, query=X)
        rho, sigma = smooth_knn(dist, k) if k >= 2 else (dist[:, 0], np.ones(len(X)))
        w = memberships(dist, rho, sigma)
        init = np.einsum("ij,ijd->id", w / w.sum(axis=1, keepdims=True), self.embedding_[idx])
        if cfg.transform_epochs <= 0:
            return init
        rows = np.repeat(np.arange(X.shape[0]), k)
        keep = w.ravel() >= w.max() / cfg.transform_epochs
        head = rows[keep].astype(np.int64)
        tail = idx.ravel()[keep].astype(np.int64)
        eps = w.max() / w.ravel()[keep]
        emb = np.ascontiguousarray(init, dtype=np.float64)
        return _optimize_layout(emb, np.array(self.embedding_, dtype=np.float64), head, tail,
                                eps, cfg.transform_epochs, self.a_, self.b_,
                                (cfg.seed + 1) % (2 ** 32), cfg.learning_rate / 4.0,
                                float(cfg.negative_sample_rate), False)

    def inverse_transform(self, Z) -> np.ndarray:
        """Inverse-distance-weighted average of the training rows whose
        embeddings are nearest to each latent point; an exact hit returns
        that training row."""
        self._check_fitted()
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        k = min(self.config.n_neighbors, self.embedding_.shape[0])
        idx, dist = knn(self.embedding_, k, "euclidean", query=Z)
        out = np.empty((Z.shape[0], self.X_fit_.shape[1]))
        for r in range(Z.shape[0]):
            if dist[r, 0] == 0.0:
                out[r] = self.X_fit_[idx[r, 0]]
            else:
                w = 1.0 / dist[r]
                out[r] = (w / w.sum()) @ self.X_fit_[idx[r]]
        return out

    def _state(self) -> dict:
        return {"X_fit_": self.X_fit_, "embedding_": self.embedding_,
                "a_": self.a_, "b_": self.b_}

    def _set_state(self, state: dict) -> None:
        super()._set_state(state)
        self.a_ = float(state["a_"])
        self.b_ = float(state["b_"])
