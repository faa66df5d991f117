"""Curve preprocessing: winsorize prices, snap them to an integer grid,
sample on a shared volume grid and standardize column-wise.

Stage names follow the matrix forms used throughout the package: ``P3`` is
the sampled price matrix, ``P4`` its standardized version.
"""

from __future__ import annotations

import configparser
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .curves import (
    CurveKind,
    CurveMatrix,
    PriceGrid,
    RawStepCurve,
    StandardizationParams,
    VolumeGrid,
)
from .errors import DegenerateColumnWarning, EmptyInput

FORMAT_VERSION = 1


def quantile_interval(values, confidence: float) -> tuple[float, float]:
    """Central empirical interval with linear interpolation between order statistics."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise EmptyInput("cannot take quantiles of an empty sample")
    if not 0 < confidence <= 1:
        raise ValueError("confidence must lie in (0, 1]")
    tail = (1.0 - confidence) / 2.0
    lo, hi = np.quantile(values, [tail, 1.0 - tail], method="linear")
    return float(lo), float(hi)


def winsorize(curve: RawStepCurve, lo: float, hi: float) -> RawStepCurve:
    if lo > hi:
        raise ValueError("winsorization bounds are inverted")
    return curve.with_prices(np.clip(curve.prices, lo, hi))


def build_price_grid(lo: float, hi: float, delta_p: int) -> PriceGrid:
    # both ends rounded up to the next multiple of delta_p: (0.01, 51.69, 1) -> 1..52
    if delta_p < 1 or int(delta_p) != delta_p:
        raise ValueError("delta_p must be a positive integer")
    delta_p = int(delta_p)
    start = math.ceil(lo / delta_p) * delta_p
    end = math.ceil(hi / delta_p) * delta_p
    return PriceGrid(start, max(start, end), delta_p)


def merge_prices(curve: RawStepCurve, grid: PriceGrid) -> RawStepCurve:
    """Replace every price by its nearest grid value; exact halves round up."""
    pos = np.floor((curve.prices - grid.start) / grid.step + 0.5)
    idx = np.clip(pos, 0, len(grid) - 1).astype(int)
    return curve.with_prices(grid.values[idx])


def build_volume_grid(lo: float, hi: float, delta_q: float) -> VolumeGrid:
    if delta_q <= 0 or not lo < hi:
        raise ValueError("volume grid needs delta_q > 0 and lo < hi")
    count = math.floor((hi - lo) / delta_q * (1 + 1e-12)) + 1
    return VolumeGrid(float(lo), float(delta_q), count, float(hi))


def sample_in_volume(curves: Sequence[RawStepCurve], grid: VolumeGrid) -> CurveMatrix:
    if not curves:
        raise EmptyInput("no curves to sample")
    kinds = {c.kind for c in curves}
    if len(kinds) != 1:
        raise ValueError("all curves in a matrix must share a kind")
    points = grid.points
    data = np.vstack([c.sample(points) for c in curves])
    return CurveMatrix(data, grid, kinds.pop(), tuple(c.timestamp for c in curves), "P3")


def fit_standardization(train) -> StandardizationParams:
    """Column mean and population std; constant columns get std 1 with a warning."""
    data = train.data if isinstance(train, CurveMatrix) else np.asarray(train, dtype=float)
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    flat = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    if np.any(flat):
        warnings.warn(
            f"{int(flat.sum())} constant training column(s); using unit scale",
            DegenerateColumnWarning,
            stacklevel=2,
        )
        std = np.where(flat, 1.0, std)
    return StandardizationParams(mean, std)


def standardize(m: CurveMatrix, params: StandardizationParams) -> CurveMatrix:
    if m.stage != "P3":
        raise ValueError("standardize expects a P3 matrix")
    return m.with_data((m.data - params.mean) / params.std, "P4", params)


def destandardize(m: CurveMatrix) -> CurveMatrix:
    params = m.standardization
    return m.with_data(m.data * params.std + params.mean, "P3")


@dataclass(frozen=True)
class PreprocessSpec:
    """Everything fitted on the training data that the pipeline reuses later."""

    confidence: float
    delta_p: int
    delta_q: float
    price_bounds: tuple
    price_grid: PriceGrid
    volume_bounds: tuple
    volume_grid: VolumeGrid
    standardization: dict

    @classmethod
    def fit(cls, train, confidence: float = 0.99, delta_p: int = 1,
            delta_q: float = 100.0) -> "PreprocessSpec":
        """Fit bounds and grids from a training :class:`Dataset` and its clearing points."""
        p_lo, p_hi = quantile_interval(train.clearing_prices(), confidence)
        q_lo, q_hi = quantile_interval(train.clearing_volumes(), confidence)
        price_grid = build_price_grid(p_lo, p_hi, delta_p)
        volume_grid = build_volume_grid(q_lo, q_hi, delta_q)
        spec = cls(confidence, int(delta_p), float(delta_q), (p_lo, p_hi), price_grid,
                   (q_lo, q_hi), volume_grid, {})
        for kind in CurveKind:
            p3 = spec.to_p3(train.curves_of(kind))
            spec.standardization[kind] = fit_standardization(p3)
        return spec

    def clean(self, curve: RawStepCurve) -> RawStepCurve:
        """Winsorize then snap prices to the grid (P1 and P2 stages)."""
        return merge_prices(winsorize(curve, *self.price_bounds), self.price_grid)

    def to_p3(self, curves: Sequence[RawStepCurve]) -> CurveMatrix:
        return sample_in_volume([self.clean(c) for c in curves], self.volume_grid)

    def to_p4(self, curves: Sequence[RawStepCurve]) -> CurveMatrix:
        p3 = self.to_p3(curves)
        return standardize(p3, self.standardization[p3.kind])

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    def dumps(self) -> str:
        def vec(values):
            return ", ".join(repr(float(v)) for v in values)

        lines = [
            "# fitted preprocessing parameters",
            f"format_version = {FORMAT_VERSION}",
            f"confidence = {self.confidence!r}",
            f"delta_p = {self.delta_p}",
            f"delta_q = {self.delta_q!r}",
            f"price_lo = {self.price_bounds[0]!r}",
            f"price_hi = {self.price_bounds[1]!r}",
            f"price_grid = {self.price_grid.start}, {self.price_grid.end}, {self.price_grid.step}",
            f"volume_lo = {self.volume_bounds[0]!r}",
            f"volume_hi = {self.volume_bounds[1]!r}",
            f"volume_grid = {self.volume_grid.start!r}, {self.volume_grid.step!r}, "
            f"{self.volume_grid.count}, {self.volume_grid.upper!r}",
        ]
        for kind, params in self.standardization.items():
            name = kind.name.lower()
            lines.append(f"{name}_mean = {vec(params.mean)}")
            lines.append(f"{name}_std = {vec(params.std)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, path) -> "PreprocessSpec":
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def loads(cls, text: str) -> "PreprocessSpec":
        parser = configparser.ConfigParser()
        parser.read_string("[spec]\n" + text)
        s = parser["spec"]
        if int(s["format_version"]) != FORMAT_VERSION:
            raise ValueError(f"unsupported preprocess format {s['format_version']}")

        def floats(key):
            return [float(x) for x in s[key].split(",")]

        g0, g1, g2 = (int(x) for x in s["price_grid"].split(","))
        v_start, v_step, v_count, v_upper = floats("volume_grid")
        standardization = {}
        for kind in CurveKind:
            name = kind.name.lower()
            if f"{name}_mean" in s:
                standardization[kind] = StandardizationParams(
                    floats(f"{name}_mean"), floats(f"{name}_std"))
        return cls(
            float(s["confidence"]), int(s["delta_p"]), float(s["delta_q"]),
            (float(s["price_lo"]), float(s["price_hi"])), PriceGrid(g0, g1, g2),
            (float(s["volume_lo"]), float(s["volume_hi"])),
            VolumeGrid(v_start, v_step, int(v_count), v_upper),
            standardization,
        )
