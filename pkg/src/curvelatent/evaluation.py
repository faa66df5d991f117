"""Metrics, chronological split, grid search, rolling refit and rank aggregation."""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field
from datetime import date
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .autoencoder import BATCH_SIZE_GRID, HIDDEN_GRID, LEARNING_RATE_GRID, Autoencoder
from .curves import CurveKind, CurveMatrix, check_monotone
from .errors import (
    AllPointsFailed,
    DataError,
    DegenerateColumnWarning,
    InsufficientHistory,
    NumericalError,
    ZeroDenominator,
)
from .isotonic import repair_matrix
from .manifold import METRICS, UMAP
from .preprocess import destandardize, fit_standardization, standardize
from .reducers import KernelPCA, PCA, Reducer

logger = logging.getLogger(__name__)

METHODS = ("pca", "kpca", "umap", "ae")
METHOD_LABELS = {"pca": "PCA", "kpca": "kPCA", "umap": "UMAP", "ae": "AE"}
METRIC_NAMES = ("rmse", "mae", "bias", "wape")
METRIC_LABELS = {"rmse": "RMSE", "mae": "MAE", "bias": "Bias", "wape": "WAPE (%)"}
HOURS_PER_DAY = 24


@dataclass(frozen=True)
class MetricSet:
    rmse: float
    mae: float
    bias: float
    wape: float

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}

    @classmethod
    def mean(cls, sets: Sequence["MetricSet"]) -> "MetricSet":
        return cls(*(float(np.mean([getattr(s, n) for s in sets])) for n in METRIC_NAMES))


def metrics(recon, actual) -> MetricSet:
    """Errors of ``recon`` against ``actual`` (both P3), bias = recon - actual."""
    recon = recon.data if isinstance(recon, CurveMatrix) else np.asarray(recon, dtype=float)
    actual = actual.data if isinstance(actual, CurveMatrix) else np.asarray(actual, dtype=float)
    if recon.shape != actual.shape:
        raise ValueError(f"shape mismatch {recon.shape} vs {actual.shape}")
    e = recon - actual
    denom = np.abs(actual).sum()
    if denom == 0:
        raise ZeroDenominator("WAPE is undefined when every actual value is zero")
    return MetricSet(
        rmse=float(np.sqrt(np.mean(e ** 2))),
        mae=float(np.mean(np.abs(e))),
        bias=float(np.mean(e)),
        wape=float(100.0 * np.abs(e).sum() / denom),
    )


@dataclass(frozen=True)
class SplitSpec:
    """Chronological, contiguous train/validation/test partition of whole days."""

    train: tuple
    val: tuple
    test: tuple

    @classmethod
    def from_dates(cls, dates: Sequence[date], ratios=(7, 1, 4)) -> "SplitSpec":
        dates = sorted(dates)
        total = sum(ratios)
        n_train = int(round(len(dates) * ratios[0] / total))
        n_val = int(round(len(dates) * ratios[1] / total))
        if n_train < 1 or n_val < 1 or n_train + n_val >= len(dates):
            raise DataError(f"{len(dates)} days are too few for a {ratios} split")
        return cls(tuple(dates[:n_train]), tuple(dates[n_train:n_train + n_val]),
                   tuple(dates[n_train + n_val:]))


def rows_on(m: CurveMatrix, days) -> np.ndarray:
    days = set(days)
    return np.array([i for i, ts in enumerate(m.row_meta) if ts.date() in days], dtype=int)


# hyperparameter grids ------------------------------------------------------

def kpca_grid(n_features: int, kernels=("polynomial", "rbf", "sigmoid", "cosine"),
              gammas=None, degrees=(2, 3), coef0s=(0.0, 1.0)) -> list[dict]:
    gammas = gammas or (1.0 / n_features, 0.01, 0.1)
    grid = []
    for kernel in kernels:
        if kernel == "polynomial":
            combos = itertools.product(gammas, degrees, coef0s)
            grid += [dict(kernel=kernel, gamma=g, degree=d, coef0=c) for g, d, c in combos]
        elif kernel == "rbf":
            grid += [dict(kernel=kernel, gamma=g) for g in gammas]
        elif kernel == "sigmoid":
            grid += [dict(kernel=kernel, gamma=g, coef0=c) for g, c in itertools.product(gammas, coef0s)]
        elif kernel == "cosine":
            grid.append(dict(kernel=kernel))
        else:
            raise ValueError(f"unknown kernel {kernel!r}")
    return grid


def umap_grid(n_neighbors=(10, 11, 12, 13, 14, 15),
              min_dist=(0.001, 0.01, 0.1, 0.2, 0.3, 0.4, 0.5),
              metric=("euclidean", "manhattan", "chebyshev")) -> list[dict]:
    unknown = set(metric) - set(METRICS)
    if unknown:
        raise ValueError(f"unknown metric(s) {sorted(unknown)}")
    return [dict(n_neighbors=k, min_dist=m, metric=s)
            for k, m, s in itertools.product(n_neighbors, min_dist, metric)]


def ae_grid(hidden=HIDDEN_GRID, learning_rate=LEARNING_RATE_GRID,
            batch_size=BATCH_SIZE_GRID) -> list[dict]:
    return [dict(hidden=h, learning_rate=lr, batch_size=b)
            for h, lr, b in itertools.product(hidden, learning_rate, batch_size)]


def default_grid(method: str, n_features: int) -> list[dict]:
    if method == "pca":
        return [{}]
    if method == "kpca":
        return kpca_grid(n_features)
    if method == "umap":
        return umap_grid()
    if method == "ae":
        return ae_grid()
    raise ValueError(f"unknown method {method!r}")


def make_reducer(method: str, d: int, params: Optional[dict] = None, seed: int = 0,
                 extra: Optional[dict] = None) -> Reducer:
    """Build an unfitted reducer; ``extra`` carries fixed (non-tuned) settings."""
    kwargs = dict(extra or {})
    kwargs.update(params or {})
    if method == "pca":
        return PCA(d)
    if method == "kpca":
        return KernelPCA(d, **kwargs)
    if method == "umap":
        return UMAP(d, seed=seed, **kwargs)
    if method == "ae":
        return Autoencoder(d, seed=seed, **kwargs)
    raise ValueError(f"unknown method {method!r}")


def reconstruct_p3(model: Reducer, p4: CurveMatrix) -> CurveMatrix:
    return destandardize(model.reconstruct(p4))


# grid search ----------------------------------------------------------------

@dataclass
class GridResult:
    method: str
    d: int
    kind: CurveKind
    best: dict
    best_score: float
    table: list = field(default_factory=list)  # (params, score or None, error message)


def grid_search(method: str, grid: Sequence[dict], train: CurveMatrix, val: CurveMatrix,
                d: int, seed: int = 0, extra: Optional[dict] = None) -> GridResult:
    """Fit every grid point on ``train`` (P4) and score validation RMSE in P3.

    Numerically failed points are pruned; ties go to the earlier grid point.
    """
    actual = destandardize(val)
    table = []
    best, best_score = None, np.inf
    for params in grid:
        try:
            model = make_reducer(method, d, params, seed, extra).fit_matrix(train, val)
            score = metrics(reconstruct_p3(model, val), actual).rmse
            if not np.isfinite(score):
                raise NumericalError("non-finite validation error")
        except (NumericalError, np.linalg.LinAlgError) as exc:
            logger.info("pruned %s %s: %s", method, params, exc)
            table.append((params, None, f"{type(exc).__name__}: {exc}"))
            continue
        table.append((params, score, ""))
        if score < best_score:
            best, best_score = params, score
    if best is None:
        raise AllPointsFailed(f"every {method} grid point failed for d={d}, {train.kind.name.lower()}")
    return GridResult(method, d, train.kind, best, float(best_score), table)


# rolling refit --------------------------------------------------------------

@dataclass
class RollingResult:
    method: str
    d: int
    kind: CurveKind
    raw: MetricSet
    repaired: MetricSet
    n_refits: int
    monotone_raw: float
    monotone_repaired: float


def rolling_evaluate(p3: CurveMatrix, test_days: Sequence[date], method: str,
                     params: Optional[dict] = None, d: int = 2, window_days: int = 7,
                     seed: int = 0, extra: Optional[dict] = None) -> RollingResult:
    """Refit standardization and reducer on the curves preceding each test day.

    ``p3`` holds every curve of one kind in chronological order. For each
    test day the ``window_days * 24`` preceding rows form the training window
    and that day's rows are reconstructed; errors are pooled over all test
    days. The autoencoder trains on the window minus its last day, which it
    uses for early stopping.
    """
    window = window_days * HOURS_PER_DAY
    recon_raw, recon_ir, actual_rows = [], [], []
    for w_index, day in enumerate(sorted(test_days)):
        test_idx = rows_on(p3, [day])
        if test_idx.size == 0:
            continue
        first = int(test_idx[0])
        if first < window:
            raise InsufficientHistory(
                f"only {first} curves precede {day}; the window needs {window}")
        train_p3 = p3.rows(slice(first - window, first))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateColumnWarning)
            params_std = fit_standardization(train_p3)
        train_p4 = standardize(train_p3, params_std)
        model = make_reducer(method, d, params, seed + w_index, extra)
        if method == "ae":
            model.fit_matrix(train_p4.rows(slice(0, window - HOURS_PER_DAY)),
                             train_p4.rows(slice(window - HOURS_PER_DAY, window)))
        else:
            model.fit_matrix(train_p4)
        test_p3 = p3.rows(test_idx)
        recon = reconstruct_p3(model, standardize(test_p3, params_std))
        recon_raw.append(recon.data)
        recon_ir.append(repair_matrix(recon).data)
        actual_rows.append(test_p3.data)
    if not actual_rows:
        raise InsufficientHistory("no test day has curves")
    raw, ir, actual = (np.vstack(x) for x in (recon_raw, recon_ir, actual_rows))
    direction = p3.kind.direction
    return RollingResult(
        method, d, p3.kind, metrics(raw, actual), metrics(ir, actual), len(actual_rows),
        float(np.mean([check_monotone(r, direction) for r in raw])),
        float(np.mean([check_monotone(r, direction) for r in ir])),
    )


# ranks and report -------------------------------------------------------------

def _badness(metric: str, value: float) -> float:
    return abs(value) if metric == "bias" else value


def rank_table(table: dict) -> dict:
    """Average rank of each column over the metric rows.

    ``table`` maps a column key, e.g. ``("umap", 2)``, to
    ``{(metric, ir): value}`` with ``ir`` in {False, True}. Per metric a
    column competes with the better of its raw and repaired value (|bias|
    for bias); columns are ranked 1 = best with tied columns sharing the mean
    rank, and ranks are averaged over metrics.
    """
    cols = list(table)
    per_metric = []
    for metric in METRIC_NAMES:
        scores = []
        for col in cols:
            values = [_badness(metric, v) for (m, _), v in table[col].items() if m == metric]
            if not values:
                break
            scores.append(min(values))
        else:
            per_metric.append(rankdata(scores, method="average"))
    if not per_metric:
        raise ValueError("no complete metric rows to rank")
    avg = np.mean(per_metric, axis=0)
    return {col: float(r) for col, r in zip(cols, avg)}


@dataclass
class EvalReport:
    """Rolling results per (method, d) and kind; values are averaged over kinds."""

    results: dict = field(default_factory=dict)  # (method, d) -> {kind: RollingResult}
    ir_modes: tuple = (False, True)

    def add(self, result: RollingResult) -> None:
        self.results.setdefault((result.method, result.d), {})[result.kind] = result

    def columns(self) -> list:
        order = {m: i for i, m in enumerate(METHODS)}
        return sorted(self.results, key=lambda c: (order.get(c[0], 99), c[1]))

    def metric_set(self, method: str, d: int, ir: bool) -> MetricSet:
        per_kind = self.results[(method, d)]
        return MetricSet.mean([r.repaired if ir else r.raw for r in per_kind.values()])

    def ranks(self) -> dict:
        table = {}
        for col in self.columns():
            entry = {}
            for ir in self.ir_modes:
                for name, value in self.metric_set(*col, ir).as_dict().items():
                    entry[(name, ir)] = value
            table[col] = entry
        return rank_table(table)

    def to_text(self) -> str:
        cols = self.columns()
        heads = [f"{METHOD_LABELS.get(m, m)} {d}d" for m, d in cols]
        width = max(10, *(len(h) + 2 for h in heads))
        lines = ["Metric".ljust(12) + "".join(h.rjust(width) for h in heads)]
        lines.append("-" * len(lines[0]))
        for name in METRIC_NAMES:
            for ir in self.ir_modes:
                label = "  + IR" if ir else METRIC_LABELS[name]
                cells = [f"{self.metric_set(m, d, ir).as_dict()[name]:.2f}" for m, d in cols]
                lines.append(label.ljust(12) + "".join(c.rjust(width) for c in cells))
            lines.append("-" * len(lines[0]))
        ranks = self.ranks()
        lines.append("Avg. Rank".ljust(12) + "".join(f"{ranks[c]:.2f}".rjust(width) for c in cols))
        lines.append("")
        lines.append("Share of monotone reconstructions (raw / + IR), mean over kinds:")
        for m, d in cols:
            per_kind = self.results[(m, d)].values()
            raw = np.mean([r.monotone_raw for r in per_kind])
            rep = np.mean([r.monotone_repaired for r in per_kind])
            lines.append(f"  {METHOD_LABELS.get(m, m)} {d}d: {raw:.4f} / {rep:.4f}")
        return "\n".join(lines) + "\n"

    def to_delimited(self) -> str:
        lines = ["method;d;ir;kind;metric;value"]
        for m, d in self.columns():
            per_kind = self.results[(m, d)]
            for ir in self.ir_modes:
                rows = [(k.name.lower(), (r.repaired if ir else r.raw)) for k, r in
                        sorted(per_kind.items(), key=lambda kv: kv[0].value, reverse=True)]
                rows.append(("mean", self.metric_set(m, d, ir)))
                for kind_name, ms in rows:
                    for name, value in ms.as_dict().items():
                        lines.append(f"{m};{d};{'on' if ir else 'off'};{kind_name};{name};{value!r}")
        return "\n".join(lines) + "\n"
