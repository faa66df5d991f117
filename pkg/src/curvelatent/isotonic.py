"""Isotonic repair of reconstructed curves via pool adjacent violators."""

from __future__ import annotations

import numpy as np

from .curves import CurveKind, CurveMatrix, Direction


def pava(values, direction: Direction = Direction.NON_DECREASING) -> np.ndarray:
    """L2 projection of ``values`` onto the monotone cone (uniform weights).

    Linear time: each element is pushed once and every merge removes a block.
    Violations are tested on the block means themselves, so the output is
    exactly monotone and a second pass leaves it untouched.
    """
    y = np.asarray(values, dtype=float)
    if direction is Direction.NON_INCREASING:
        return -pava(-y, Direction.NON_DECREASING)
    n = y.size
    if n <= 1:
        return y.copy()
    # stack of pooled blocks: running sums and sizes
    sums = np.empty(n)
    sizes = np.empty(n, dtype=np.int64)
    top = -1
    for v in y:
        top += 1
        sums[top] = v
        sizes[top] = 1
        while top > 0 and sums[top - 1] / sizes[top - 1] > sums[top] / sizes[top]:
            sums[top - 1] += sums[top]
            sizes[top - 1] += sizes[top]
            top -= 1
    means = sums[: top + 1] / sizes[: top + 1]
    return np.repeat(means, sizes[: top + 1])


def repair_matrix(m: CurveMatrix, kind: CurveKind | None = None) -> CurveMatrix:
    """Row-wise isotonic projection with the direction implied by the curve kind."""
    kind = kind or m.kind
    if m.stage != "P3":
        raise ValueError("isotonic repair works on P3 (price) matrices")
    repaired = np.vstack([pava(row, kind.direction) for row in m.data]) if len(m.data) else m.data
    return m.with_data(repaired)
