"""Domain model for aggregated stepwise market curves and the grids they are sampled on."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional, Sequence

import numpy as np

from .errors import DuplicateVolume, NonMonotoneCurve

# tolerance for reconstructed (floating) curves; raw data is checked exactly
EPS_MONO = 1e-9


class Direction(enum.Enum):
    NON_DECREASING = "non-decreasing"
    NON_INCREASING = "non-increasing"


class CurveKind(enum.Enum):
    SUPPLY = "S"
    DEMAND = "D"

    @property
    def direction(self) -> Direction:
        if self is CurveKind.SUPPLY:
            return Direction.NON_DECREASING
        return Direction.NON_INCREASING

    @classmethod
    def from_code(cls, code: str) -> "CurveKind":
        return cls(code)


def check_monotone(values, direction: Direction, eps: float = EPS_MONO) -> bool:
    """True iff every adjacent pair respects ``direction`` up to ``eps``."""
    diffs = np.diff(np.asarray(values, dtype=float))
    if direction is Direction.NON_DECREASING:
        return bool(np.all(diffs >= -eps))
    return bool(np.all(diffs <= eps))


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RawStepCurve:
    """One hourly aggregated curve.

    Step ``j`` means "price ``prices[j]`` applies up to cumulative volume
    ``volumes[j]``". Volumes are strictly increasing and prices follow the
    direction of ``kind``; both are checked exactly on construction.
    """

    timestamp: datetime
    kind: CurveKind
    prices: np.ndarray
    volumes: np.ndarray

    def __post_init__(self):
        prices = _frozen_array(self.prices)
        volumes = _frozen_array(self.volumes)
        if prices.ndim != 1 or prices.shape != volumes.shape or prices.size == 0:
            raise ValueError("a curve needs at least one (price, volume) step")
        if not (np.all(np.isfinite(prices)) and np.all(np.isfinite(volumes))):
            raise ValueError("curve steps must be finite")
        if np.any(np.diff(volumes) <= 0):
            raise DuplicateVolume(self.timestamp, self.kind)
        if not check_monotone(prices, self.kind.direction, eps=0.0):
            raise NonMonotoneCurve(self.timestamp, self.kind)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "volumes", volumes)

    @property
    def steps(self) -> list[tuple[float, float]]:
        return list(zip(self.prices.tolist(), self.volumes.tolist()))

    @property
    def max_volume(self) -> float:
        return float(self.volumes[-1])

    def with_prices(self, prices) -> "RawStepCurve":
        return RawStepCurve(self.timestamp, self.kind, prices, self.volumes)

    def sample(self, q) -> np.ndarray:
        """Vectorised :func:`price_at_volume`."""
        idx = np.searchsorted(self.volumes, np.asarray(q, dtype=float), side="left")
        return self.prices[np.minimum(idx, self.prices.size - 1)]

    def __eq__(self, other):
        if not isinstance(other, RawStepCurve):
            return NotImplemented
        return (
            self.timestamp == other.timestamp
            and self.kind is other.kind
            and np.array_equal(self.prices, other.prices)
            and np.array_equal(self.volumes, other.volumes)
        )

    __hash__ = None


def price_at_volume(curve: RawStepCurve, q: float) -> float:
    """Price of the first step whose cumulative volume reaches ``q``.

    Volumes past the last step clamp to the last price, volumes before the
    first step get the first price.
    """
    return float(curve.sample(q))


@dataclass(frozen=True)
class PriceGrid:
    start: int
    end: int
    step: int

    def __post_init__(self):
        if self.step < 1 or self.start > self.end:
            raise ValueError(f"invalid price grid {self}")
        if (self.end - self.start) % self.step:
            raise ValueError("price grid end must lie on the step lattice")

    @property
    def values(self) -> np.ndarray:
        return np.arange(self.start, self.end + self.step, self.step, dtype=float)

    def __len__(self) -> int:
        return (self.end - self.start) // self.step + 1


@dataclass(frozen=True)
class VolumeGrid:
    start: float
    step: float
    count: int
    upper: float

    def __post_init__(self):
        if self.step <= 0 or self.count < 2:
            raise ValueError(f"invalid volume grid {self}")
        if self.start + (self.count - 1) * self.step > self.upper * (1 + 1e-12):
            raise ValueError("volume grid exceeds its declared upper bound")

    @property
    def points(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count, dtype=float)

    def __len__(self) -> int:
        return self.count


@dataclass(frozen=True, eq=False)
class StandardizationParams:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = _frozen_array(self.mean)
        std = _frozen_array(self.std)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("mean and std must be vectors of equal length")
        if np.any(std <= 0):
            raise ValueError("standard deviations must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


@dataclass(frozen=True, eq=False)
class CurveMatrix:
    """K x N reference prices on a shared volume grid, stage ``P3`` or ``P4``."""

    data: np.ndarray
    grid: VolumeGrid
    kind: CurveKind
    row_meta: tuple
    stage: str = "P3"
    standardization: Optional[StandardizationParams] = field(default=None)

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2:
            raise ValueError("curve matrix must be two-dimensional")
        if not np.all(np.isfinite(data)):
            raise ValueError("curve matrix contains non-finite values")
        if data.shape[0] != len(self.row_meta):
            raise ValueError("row metadata length does not match row count")
        if data.shape[1] != self.grid.count:
            raise ValueError("column count does not match the volume grid")
        if self.stage not in ("P3", "P4"):
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.stage == "P4" and self.standardization is None:
            raise ValueError("a P4 matrix needs its standardization parameters")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "row_meta", tuple(self.row_meta))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def rows(self, index: Sequence[int] | slice) -> "CurveMatrix":
        meta = np.empty(len(self.row_meta), dtype=object)
        meta[:] = self.row_meta
        return CurveMatrix(
            self.data[index], self.grid, self.kind, tuple(meta[index]),
            self.stage, self.standardization,
        )

    def with_data(self, data, stage: Optional[str] = None,
                  standardization: Optional[StandardizationParams] = None) -> "CurveMatrix":
        stage = stage or self.stage
        if standardization is None and stage == "P4":
            standardization = self.standardization
        return CurveMatrix(data, self.grid, self.kind, self.row_meta, stage,
                           standardization if stage == "P4" else None)
