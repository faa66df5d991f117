"""Reading, writing and generating hourly supply/demand curve datasets.

File format, one step per line, ';'-delimited, UTF-8, '#' starts a comment::

    DATE(YYYY-MM-DD);HOUR(0-23);KIND(S|D);PRICE;CUM_VOLUME
"""

from __future__ import annotations

import io
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .curves import CurveKind, RawStepCurve
from .errors import MalformedLine, MissingPair, NoIntersection

logger = logging.getLogger(__name__)

HEADER = "# DATE;HOUR;KIND;PRICE;CUM_VOLUME"


@dataclass(frozen=True)
class Dataset:
    """Paired hourly curves plus the market-clearing point of each hour."""

    curves: tuple
    clearing: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "curves", tuple(self.curves))
        by_hour: dict = {}
        for curve in self.curves:
            by_hour.setdefault(curve.timestamp, {})[curve.kind] = curve
        for ts, pair in by_hour.items():
            if len(pair) != 2:
                raise MissingPair(ts)
            if ts not in self.clearing:
                raise ValueError(f"hour {ts} has no clearing point")
            _, volume = self.clearing[ts]
            top = min(c.max_volume for c in pair.values())
            if not 0 <= volume <= top:
                raise ValueError(f"clearing volume at {ts} lies outside the curves")
        object.__setattr__(self, "_by_hour", by_hour)

    @property
    def timestamps(self) -> list[datetime]:
        return sorted(self._by_hour)

    @property
    def dates(self) -> list[date]:
        return sorted({ts.date() for ts in self._by_hour})

    def curve(self, timestamp: datetime, kind: CurveKind) -> RawStepCurve:
        return self._by_hour[timestamp][kind]

    def curves_of(self, kind: CurveKind) -> list[RawStepCurve]:
        return [self._by_hour[ts][kind] for ts in self.timestamps]

    def clearing_prices(self) -> np.ndarray:
        return np.array([self.clearing[ts][0] for ts in self.timestamps])

    def clearing_volumes(self) -> np.ndarray:
        return np.array([self.clearing[ts][1] for ts in self.timestamps])

    def subset(self, timestamps: Iterable[datetime]) -> "Dataset":
        keep = set(timestamps)
        curves = [c for c in self.curves if c.timestamp in keep]
        return Dataset(curves, {ts: self.clearing[ts] for ts in keep})

    def __len__(self) -> int:
        return len(self._by_hour)


def clearing_point(supply: RawStepCurve, demand: RawStepCurve) -> tuple[float, float]:
    """Largest volume at which the supply price does not exceed the demand price.

    Both step functions are constant between their breakpoints, so the
    condition only needs evaluating at the breakpoints inside the overlap
    ``[0, min(last supply volume, last demand volume)]``. The returned price is
    the supply price at the clearing volume.
    """
    top = min(supply.max_volume, demand.max_volume)
    if supply.sample(0.0) > demand.sample(0.0):
        raise NoIntersection(
            f"supply starts above demand at {supply.timestamp}"
        )
    candidates = np.concatenate(([0.0, top], supply.volumes, demand.volumes))
    candidates = np.unique(candidates[candidates <= top])
    ok = supply.sample(candidates) <= demand.sample(candidates)
    volume = float(candidates[ok].max())
    return float(supply.sample(volume)), volume


def build_dataset(curves: Iterable[RawStepCurve]) -> Dataset:
    """Pair curves by hour and attach clearing points.

    Hours whose curves do not intersect are dropped with a warning.
    """
    by_hour: "OrderedDict[datetime, dict]" = OrderedDict()
    for curve in curves:
        by_hour.setdefault(curve.timestamp, {})[curve.kind] = curve
    kept, clearing = [], {}
    for ts in sorted(by_hour):
        pair = by_hour[ts]
        if len(pair) != 2:
            raise MissingPair(ts)
        supply, demand = pair[CurveKind.SUPPLY], pair[CurveKind.DEMAND]
        try:
            clearing[ts] = clearing_point(supply, demand)
        except NoIntersection:
            logger.warning("dropping hour %s: supply and demand do not intersect", ts)
            continue
        kept.extend([supply, demand])
    return Dataset(kept, clearing)


def _parse_line(line_no: int, line: str):
    fields = line.split(";")
    if len(fields) != 5:
        raise MalformedLine(line_no, f"expected 5 fields, got {len(fields)}")
    day, hour, kind, price, volume = (f.strip() for f in fields)
    try:
        day = datetime.strptime(day, "%Y-%m-%d")
    except ValueError:
        raise MalformedLine(line_no, f"bad date {day!r}") from None
    try:
        hour = int(hour)
    except ValueError:
        raise MalformedLine(line_no, f"bad hour {hour!r}") from None
    if not 0 <= hour <= 23:
        raise MalformedLine(line_no, f"hour {hour} outside 0-23")
    try:
        kind = CurveKind.from_code(kind)
    except ValueError:
        raise MalformedLine(line_no, f"unknown kind code {kind!r}") from None
    try:
        price, volume = float(price), float(volume)
    except ValueError:
        raise MalformedLine(line_no, "unparseable number") from None
    if not (math.isfinite(price) and math.isfinite(volume)):
        raise MalformedLine(line_no, "non-finite number")
    return day + timedelta(hours=hour), kind, price, volume


def parse_curve_file(stream: Union[bytes, io.BufferedIOBase, io.RawIOBase]) -> Dataset:
    """Parse a delimited curve file (bytes or binary stream) into a :class:`Dataset`."""
    raw = stream if isinstance(stream, bytes) else stream.read()
    text = raw.decode("utf-8")
    steps: "OrderedDict[tuple, list]" = OrderedDict()
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        ts, kind, price, volume = _parse_line(line_no, line)
        steps.setdefault((ts, kind), []).append((volume, price))
    curves = []
    for (ts, kind), pairs in steps.items():
        pairs.sort(key=lambda p: p[0])
        volumes, prices = zip(*pairs)
        curves.append(RawStepCurve(ts, kind, prices, volumes))
    return build_dataset(curves)


def read_dataset(path: Union[str, Path]) -> Dataset:
    with open(path, "rb") as fh:
        return parse_curve_file(fh)


def serialize_dataset(dataset: Dataset) -> bytes:
    lines = [HEADER]
    for ts in dataset.timestamps:
        for kind in (CurveKind.SUPPLY, CurveKind.DEMAND):
            curve = dataset.curve(ts, kind)
            stamp = f"{ts:%Y-%m-%d};{ts.hour}"
            for price, volume in curve.steps:
                lines.append(f"{stamp};{kind.value};{price!r};{volume!r}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def write_dataset(dataset: Dataset, path: Union[str, Path]) -> None:
    Path(path).write_bytes(serialize_dataset(dataset))


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 0
    n_days: int = 60
    base_volume: float = 30000.0
    daily_amplitude: float = 6000.0
    noise_scale: float = 4.0
    n_steps_range: tuple = (40, 80)
    price_cap: float = 180.0
    start: date = date(2019, 1, 1)

    def __post_init__(self):
        if self.n_days < 1:
            raise ValueError("n_days must be at least 1")
        if self.daily_amplitude < 0 or self.noise_scale < 0:
            raise ValueError("amplitudes must be non-negative")
        lo, hi = self.n_steps_range
        if lo < 2 or hi < lo:
            raise ValueError("n_steps_range must satisfy 2 <= min <= max")
        if self.daily_amplitude >= self.base_volume:
            raise ValueError("daily_amplitude must stay below base_volume")


def _increments(rng, n):
    inc = rng.uniform(0.5, 1.5, size=n)
    return np.cumsum(inc) / inc.sum()


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    """Seeded stand-in for an exchange's hourly aggregate curves.

    Each hour of the day gets a template supply curve (merit order plus a
    midday solar block of zero-cost volume) and a template demand curve whose
    level follows a 24-hour cycle. Every day perturbs the templates with wind,
    demand-level and per-step price noise, all proportional to
    ``noise_scale``; with ``noise_scale=0`` each day repeats the templates.
    Prices are re-sorted after perturbation so every curve is monotone.
    """
    rng = np.random.default_rng(cfg.seed)
    lo_n, hi_n = cfg.n_steps_range
    cap = cfg.price_cap
    templates = []
    for hour in range(24):
        n_s = int(rng.integers(lo_n, hi_n + 1))
        n_d = int(rng.integers(lo_n, hi_n + 1))
        solar = 0.25 * cfg.base_volume * max(0.0, math.sin(math.pi * (hour - 6) / 12))
        s_vol = solar + 1.8 * cfg.base_volume * _increments(rng, n_s)
        s_price = cap * np.sort(rng.uniform(size=n_s)) ** 3
        level = cfg.base_volume + cfg.daily_amplitude * math.sin(2 * math.pi * (hour - 9) / 24)
        d_vol = level * (0.8 + 0.35 * np.concatenate(([0.0], _increments(rng, n_d - 1))))
        d_price = np.concatenate(([cap], np.sort(rng.uniform(0.0, 0.6 * cap, n_d - 1))[::-1]))
        templates.append((s_vol, s_price, d_vol, d_price))

    curves = []
    for day in range(cfg.n_days):
        current = cfg.start + timedelta(days=day)
        wind = rng.uniform() * cfg.noise_scale * 300.0
        shift = rng.normal() * cfg.noise_scale * 100.0
        if current.weekday() >= 5:
            shift -= cfg.noise_scale * 200.0
        for hour, (s_vol, s_price, d_vol, d_price) in enumerate(templates):
            ts = datetime.combine(current, datetime.min.time()) + timedelta(hours=hour)
            scale = 1.0 + 0.002 * cfg.noise_scale * rng.normal(size=2)
            s_scale, d_scale = np.maximum(scale, 0.5)
            sp = s_price + cfg.noise_scale * rng.normal(size=s_price.size)
            dp = d_price[1:] + cfg.noise_scale * rng.normal(size=d_price.size - 1)
            sp = np.clip(np.sort(sp), 0.0, cap)
            dp = np.concatenate(([cap], np.clip(np.sort(dp)[::-1], 0.0, cap)))
            curves.append(RawStepCurve(ts, CurveKind.SUPPLY, sp, wind + s_scale * s_vol))
            curves.append(
                RawStepCurve(ts, CurveKind.DEMAND, dp, max(shift, -0.5 * d_vol[0]) + d_scale * d_vol)
            )
    return build_dataset(curves)
