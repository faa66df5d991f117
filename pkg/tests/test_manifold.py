import numpy as np
import pytest

from curvelatent.manifold import (
    UMAP,
    embed,
    fit_ab,
    fuzzy_graph,
    knn,
    smooth_knn,
    t_conorm,
)


def offset_exponential(t, min_dist):
    return np.where(t < min_dist, 1.0, np.exp(-(t - min_dist)))


def grid_search_ab(min_dist):
    """Coarse-then-fine least squares over (a, b), no optimizer involved."""
    t = np.linspace(0, 3, 300)
    target = offset_exponential(t, min_dist)

    def sse(a, b):
        return np.sum((1 / (1 + a[..., None] * t ** (2 * b[..., None])) - target) ** 2, axis=-1)

    a_range, b_range = (0.1, 5.0), (0.3, 2.0)
    for _ in range(4):
        A, B = np.meshgrid(np.linspace(*a_range, 81), np.linspace(*b_range, 81), indexing="ij")
        i, j = np.unravel_index(np.argmin(sse(A, B)), A.shape)
        a, b = A[i, j], B[i, j]
        da, db = (a_range[1] - a_range[0]) / 20, (b_range[1] - b_range[0]) / 20
        a_range, b_range = (max(a - da, 1e-3), a + da), (max(b - db, 1e-3), b + db)
    return a, b


def rings(n_per=60, seed=0):
    """Two well-separated noisy circles in 5-d."""
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, 2 * np.pi, size=2 * n_per)
    X = np.zeros((2 * n_per, 5))
    X[:, 0], X[:, 1] = np.cos(theta), np.sin(theta)
    X[n_per:, 2] = 10.0
    X += rng.normal(scale=0.05, size=X.shape)
    return X


def test_knn_line():
    X = np.array([[0.0], [1.0], [3.0]])
    idx, dist = knn(X, 1)
    assert idx.ravel().tolist() == [1, 0, 1]
    assert dist.ravel().tolist() == [1.0, 1.0, 2.0]


def test_knn_metrics_and_ties():
    X = np.array([[0.0, 0.0], [3.0, 0.0], [2.0, 2.0]])
    # euclidean: 3 vs sqrt(8); chebyshev: 3 vs 2; manhattan: 3 vs 4
    assert knn(X, 1, "euclidean")[0][0, 0] == 2
    assert knn(X, 1, "chebyshev")[0][0, 0] == 2
    assert knn(X, 1, "manhattan")[0][0, 0] == 1
    dup = np.array([[1.0], [0.0], [0.0], [2.0]])
    idx, dist = knn(dup, 2)
    assert idx[0].tolist() == [1, 2]
    assert idx[1].tolist() == [2, 0] and dist[1, 0] == 0.0
    q_idx, _ = knn(dup, 2, query=np.array([[0.0]]))
    assert q_idx[0].tolist() == [1, 2]


def test_smooth_knn():
    rho, sigma = smooth_knn([[2.0, 2.0, 2.0]])
    assert rho[0] == 2.0 and sigma[0] == 1e-12
    d = np.array([[1.0, 2.0, 3.0, 4.0]])
    rho, sigma = smooth_knn(d)
    total = np.exp(-(d[0] - rho[0]) / sigma[0]).sum()
    assert rho[0] == 1.0
    assert abs(total - np.log2(4)) < 1e-6


@pytest.mark.parametrize("a, b, expected", [(0, 0, 0), (1, 0.3, 1), (0.5, 0.5, 0.75), (0.2, 0.4, 0.52)])
def test_t_conorm(a, b, expected):
    assert t_conorm(a, b) == pytest.approx(expected)


def test_fuzzy_graph_is_symmetric():
    g = fuzzy_graph(rings(20), 5)
    W = g.weights.toarray()
    assert np.allclose(W, W.T)
    assert W.min() >= 0 and W.max() <= 1
    assert np.all(np.diag(W) == 0)
    assert np.allclose(W.max(axis=1), 1.0)


def test_fit_ab_against_grid_search():
    a, b, _ = fit_ab(0.1)
    assert (a, b) == pytest.approx((1.577, 0.895), abs=2e-3)
    for min_dist in (0.05, 0.1, 0.3, 0.5):
        a, b, _ = fit_ab(min_dist)
        ga, gb = grid_search_ab(min_dist)
        assert a == pytest.approx(ga, rel=0.02)
        assert b == pytest.approx(gb, rel=0.02)
    values = [fit_ab(m)[0] for m in (0.5, 0.3, 0.1, 0.05)]
    assert values == sorted(values)
    a, b, _ = fit_ab(0.1)
    assert 1 / (1 + a * 1e-9 ** (2 * b)) == pytest.approx(1.0, abs=1e-6)


def test_embed_duplicates_stay_close():
    X = rings(30)
    X = np.vstack([X, X[:5]])
    g = fuzzy_graph(X, 8)
    a, b, _ = fit_ab(0.1)
    emb = embed(g.weights, a, b, 2, n_epochs=200, seed=4)
    assert np.all(np.isfinite(emb))
    gaps = np.linalg.norm(emb[:5] - emb[-5:], axis=1)
    assert np.all(gaps < 2 * 0.1 * np.ptp(emb, axis=0).max())


def test_umap_deterministic_and_separates_rings():
    X = rings()
    e1 = UMAP(2, n_neighbors=10, seed=11).fit(X).embedding_
    e2 = UMAP(2, n_neighbors=10, seed=11).fit(X).embedding_
    assert np.array_equal(e1, e2)
    c0, c1 = e1[:60].mean(axis=0), e1[60:].mean(axis=0)
    spread = max(np.linalg.norm(e1[:60] - c0, axis=1).max(), np.linalg.norm(e1[60:] - c1, axis=1).max())
    assert np.linalg.norm(c0 - c1) > spread


def test_transform_lands_near_training_embedding():
    X = rings()
    model = UMAP(2, n_neighbors=10, seed=2).fit(X)
    Z = model.transform(X[:20])
    diameter = np.ptp(model.embedding_, axis=0).max()
    assert np.all(np.linalg.norm(Z - model.embedding_[:20], axis=1) < 0.1 * diameter)
    assert np.array_equal(Z, model.transform(X[:20]))


def test_inverse_transform():
    X = rings(20)
    model = UMAP(3, n_neighbors=6, seed=0).fit(X)
    assert np.array_equal(model.inverse_transform(model.embedding_[:7]), X[:7])
    rng = np.random.default_rng(1)
    lo, hi = model.embedding_.min(axis=0), model.embedding_.max(axis=0)
    back = model.inverse_transform(rng.uniform(lo, hi, size=(30, 3)))
    assert np.all(back >= X.min(axis=0) - 1e-12) and np.all(back <= X.max(axis=0) + 1e-12)
