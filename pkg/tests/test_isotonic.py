import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvelatent.curves import CurveKind, CurveMatrix, Direction, VolumeGrid, check_monotone
from curvelatent.isotonic import pava, repair_matrix

from conftest import T0

UP = Direction.NON_DECREASING
DOWN = Direction.NON_INCREASING


def brute_force_isotonic(y):
    """Best monotone fit by trying every split into contiguous blocks.

    The optimum is constant on blocks, each equal to its block mean, so the
    minimum over all monotone block-mean candidates is the projection.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    best, best_cost = None, np.inf
    for cuts in itertools.product([0, 1], repeat=n - 1):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [n]
        fit = np.concatenate([np.full(b - a, y[a:b].mean()) for a, b in zip(bounds, bounds[1:])])
        if np.all(np.diff(fit) >= -1e-12):
            cost = np.sum((fit - y) ** 2)
            if cost < best_cost - 1e-12:
                best, best_cost = fit, cost
    return best


@pytest.mark.parametrize(
    "values, direction, expected",
    [
        ([1, 3, 2, 4], UP, [1, 2.5, 2.5, 4]),
        ([4, 3, 2, 1], UP, [2.5, 2.5, 2.5, 2.5]),
        ([5, 6, 4], DOWN, [5.5, 5.5, 4]),
        ([1, 2, 3], UP, [1, 2, 3]),
        ([7.0], UP, [7.0]),
        ([], UP, []),
    ],
)
def test_pava_examples(values, direction, expected):
    assert list(pava(values, direction)) == pytest.approx(expected)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=4))
def test_pava_matches_exhaustive_search(values):
    assert pava(values, UP) == pytest.approx(brute_force_isotonic(values), abs=1e-12)
    down = brute_force_isotonic(-np.asarray(values, dtype=float))
    assert pava(values, DOWN) == pytest.approx(-down, abs=1e-12)


vectors = st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200)


@settings(max_examples=300, deadline=None)
@given(values=vectors, direction=st.sampled_from([UP, DOWN]))
def test_pava_properties(values, direction):
    y = np.asarray(values)
    out = pava(y, direction)
    assert check_monotone(out, direction, eps=0.0)
    assert np.array_equal(pava(out, direction), out)
    assert out.mean() == pytest.approx(y.mean(), rel=1e-9, abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 60).flatmap(
    lambda n: st.tuples(st.lists(st.floats(-100, 100), min_size=n, max_size=n),
                        st.lists(st.floats(-100, 100), min_size=n, max_size=n))))
def test_pava_is_non_expansive(pair):
    x, y = (np.asarray(v) for v in pair)
    gap = np.linalg.norm(pava(x) - pava(y))
    assert gap <= np.linalg.norm(x - y) + 1e-9


def test_repair_matrix():
    grid = VolumeGrid(0.0, 1.0, 3, 2.0)
    m = CurveMatrix([[1, 3, 2], [9, 1, 1]], grid, CurveKind.DEMAND, (T0, T0))
    out = repair_matrix(m)
    assert out.data.tolist() == [[2, 2, 2], [9, 1, 1]]
    assert out.stage == "P3"
    assert repair_matrix(m, CurveKind.SUPPLY).data.tolist() == [[1, 2.5, 2.5], [11 / 3] * 3]
