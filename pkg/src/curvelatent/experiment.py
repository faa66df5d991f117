"""Config-driven experiment pipeline used by the command line.

Config files are flat ``key = value`` lines with ``#`` comments; list values
are comma separated. Relative paths resolve against the config file's folder.
Every random component draws its seed from the single ``seed`` key plus a
fixed offset (:data:`SEED_OFFSETS`); rolling refits add the window index.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .curves import CurveKind, CurveMatrix
from .errors import ConfigError, DataError
from .evaluation import (
    METHODS,
    EvalReport,
    MetricSet,
    RollingResult,
    SplitSpec,
    ae_grid,
    grid_search,
    kpca_grid,
    make_reducer,
    rolling_evaluate,
    rows_on,
    umap_grid,
)
from .ingestion import Dataset, SyntheticConfig, generate_synthetic, read_dataset
from .isotonic import repair_matrix
from .preprocess import PreprocessSpec, destandardize, standardize
from .reducers import LatentMatrix, Reducer, save_model

SEED_OFFSETS = {"synthetic": 0, "umap": 1000, "ae": 2000}

DEFAULTS = {
    "data": "synthetic",
    "out": "runs/experiment",
    "seed": "0",
    "methods": "pca, kpca, umap, ae",
    "dims": "2, 3",
    "ir": "both",
    "window_days": "7",
    "synthetic.n_days": "60",
    "synthetic.base_volume": "30000",
    "synthetic.daily_amplitude": "6000",
    "synthetic.noise_scale": "4",
    "synthetic.n_steps_min": "40",
    "synthetic.n_steps_max": "80",
    "synthetic.price_cap": "180",
    "preprocess.confidence": "0.99",
    "preprocess.delta_p": "1",
    "preprocess.delta_q": "100",
    "kpca.kernel": "polynomial, rbf, sigmoid, cosine",
    "kpca.gamma": "auto, 0.01, 0.1",
    "kpca.degree": "2, 3",
    "kpca.coef0": "0, 1",
    "kpca.alpha": "0.001",
    "umap.n_neighbors": "10, 11, 12, 13, 14, 15",
    "umap.min_dist": "0.001, 0.01, 0.1, 0.2, 0.3, 0.4, 0.5",
    "umap.metric": "euclidean, manhattan, chebyshev",
    "umap.n_epochs": "200",
    "umap.transform_epochs": "30",
    "ae.hidden": "256x128, 128x64, 64x32, 32x16, 16x8",
    "ae.learning_rate": "0.1, 0.01, 0.001, 0.0001",
    "ae.batch_size": "8, 16, 32, 64, 128",
    "ae.epochs": "500",
    "ae.patience": "20",
}


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path, overrides: Optional[dict] = None) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        return cls.parse(path.read_text(encoding="utf-8"), path.parent, overrides)

    @classmethod
    def parse(cls, text: str, base_dir=".", overrides: Optional[dict] = None) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        parser.optionxform = str
        try:
            parser.read_string("[experiment]\n" + text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from None
        values = dict(DEFAULTS)
        for key, value in parser["experiment"].items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = value.strip()
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = str(value)
        cfg = cls(values, Path(base_dir))
        cfg.validate()
        return cfg

    def _get(self, key, convert):
        try:
            return convert(self.values[key])
        except (ValueError, TypeError):
            raise ConfigError(f"bad value for {key!r}: {self.values[key]!r}") from None

    def validate(self) -> None:
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"key 'methods': unknown method(s) {bad}")
        if not self.methods:
            raise ConfigError("key 'methods': nothing to run")
        if any(d < 1 for d in self.dims):
            raise ConfigError("key 'dims': dimensions must be >= 1")
        if self.values["ir"] not in ("on", "off", "both"):
            raise ConfigError("key 'ir': expected on, off or both")
        self.synthetic_config()
        if self.window_days < 1:
            raise ConfigError("key 'window_days': must be >= 1")
        for method in self.methods:
            try:
                self.grid(method, 10)
            except ValueError as exc:
                raise ConfigError(f"{method} grid: {exc}") from None
        self.preprocess_params()

    @property
    def methods(self) -> list[str]:
        return _split(self.values["methods"])

    @property
    def dims(self) -> list[int]:
        return self._get("dims", lambda v: [int(x) for x in _split(v)])

    @property
    def seed(self) -> int:
        return self._get("seed", int)

    @property
    def window_days(self) -> int:
        return self._get("window_days", int)

    @property
    def ir_modes(self) -> tuple:
        return {"on": (True,), "off": (False,), "both": (False, True)}[self.values["ir"]]

    @property
    def out_dir(self) -> Path:
        return self.base_dir / self.values["out"]

    @property
    def data_path(self) -> Optional[Path]:
        if self.values["data"] == "synthetic":
            return None
        return self.base_dir / self.values["data"]

    def synthetic_config(self) -> SyntheticConfig:
        def f(name):
            return self._get(f"synthetic.{name}", float)

        try:
            return SyntheticConfig(
                seed=self.seed + SEED_OFFSETS["synthetic"],
                n_days=self._get("synthetic.n_days", int),
                base_volume=f("base_volume"),
                daily_amplitude=f("daily_amplitude"),
                noise_scale=f("noise_scale"),
                n_steps_range=(self._get("synthetic.n_steps_min", int),
                               self._get("synthetic.n_steps_max", int)),
                price_cap=f("price_cap"),
            )
        except ValueError as exc:
            raise ConfigError(f"synthetic settings: {exc}") from None

    def preprocess_params(self) -> dict:
        return {
            "confidence": self._get("preprocess.confidence", float),
            "delta_p": self._get("preprocess.delta_p", int),
            "delta_q": self._get("preprocess.delta_q", float),
        }

    def grid(self, method: str, n_features: int) -> list[dict]:
        if method == "pca":
            return [{}]
        if method == "kpca":
            gammas = self._get("kpca.gamma", lambda v: tuple(
                1.0 / n_features if g == "auto" else float(g) for g in _split(v)))
            return kpca_grid(
                n_features,
                kernels=tuple(_split(self.values["kpca.kernel"])),
                gammas=gammas,
                degrees=self._get("kpca.degree", lambda v: tuple(int(x) for x in _split(v))),
                coef0s=self._get("kpca.coef0", lambda v: tuple(float(x) for x in _split(v))),
            )
        if method == "umap":
            return umap_grid(
                self._get("umap.n_neighbors", lambda v: tuple(int(x) for x in _split(v))),
                self._get("umap.min_dist", lambda v: tuple(float(x) for x in _split(v))),
                tuple(_split(self.values["umap.metric"])),
            )
        if method == "ae":
            return ae_grid(
                self._get("ae.hidden", lambda v: tuple(
                    tuple(int(h) for h in x.split("x")) for x in _split(v))),
                self._get("ae.learning_rate", lambda v: tuple(float(x) for x in _split(v))),
                self._get("ae.batch_size", lambda v: tuple(int(x) for x in _split(v))),
            )
        raise ConfigError(f"unknown method {method!r}")

    def fixed_settings(self, method: str) -> dict:
        """Non-tuned settings passed to every reducer of ``method``."""
        if method == "kpca":
            return {"alpha": self._get("kpca.alpha", float)}
        if method == "umap":
            return {"n_epochs": self._get("umap.n_epochs", int),
                    "transform_epochs": self._get("umap.transform_epochs", int)}
        if method == "ae":
            return {"epochs": self._get("ae.epochs", int),
                    "patience": self._get("ae.patience", int)}
        return {}

    def method_seed(self, method: str) -> int:
        return self.seed + SEED_OFFSETS.get(method, 0)

    def canonical(self) -> str:
        return "\n".join(f"{k} = {self.values[k]}" for k in sorted(self.values)) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


# pipeline stages ------------------------------------------------------------

def load_dataset(cfg: ExperimentConfig) -> Dataset:
    path = cfg.data_path
    if path is None:
        return generate_synthetic(cfg.synthetic_config())
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    return read_dataset(path)


@dataclass
class Prepared:
    dataset: Dataset
    split: SplitSpec
    spec: PreprocessSpec
    p3: dict  # kind -> all curves of that kind, chronological

    def p4(self, kind: CurveKind, days) -> CurveMatrix:
        m = self.p3[kind].rows(rows_on(self.p3[kind], days))
        return standardize(m, self.spec.standardization[kind])


def prepare(cfg: ExperimentConfig, dataset: Optional[Dataset] = None) -> Prepared:
    dataset = dataset or load_dataset(cfg)
    split = SplitSpec.from_dates(dataset.dates)
    train = dataset.subset(ts for ts in dataset.timestamps if ts.date() in set(split.train))
    spec = PreprocessSpec.fit(train, **cfg.preprocess_params())
    p3 = {kind: spec.to_p3(dataset.curves_of(kind)) for kind in CurveKind}
    return Prepared(dataset, split, spec, p3)


def tune(cfg: ExperimentConfig, prep: Prepared) -> dict:
    """Grid search per (method, d, kind); returns ``{key: GridResult}``."""
    results = {}
    n_features = prep.spec.volume_grid.count
    for method in cfg.methods:
        grid = cfg.grid(method, n_features)
        for d in cfg.dims:
            for kind in CurveKind:
                train = prep.p4(kind, prep.split.train)
                val = prep.p4(kind, prep.split.val)
                results[(method, d, kind)] = grid_search(
                    method, grid, train, val, d, cfg.method_seed(method),
                    cfg.fixed_settings(method))
    return results


def fit_final(cfg: ExperimentConfig, prep: Prepared, method: str, d: int, kind: CurveKind,
              params: dict) -> Reducer:
    train = prep.p4(kind, prep.split.train)
    val = prep.p4(kind, prep.split.val)
    model = make_reducer(method, d, params, cfg.method_seed(method), cfg.fixed_settings(method))
    return model.fit_matrix(train, val)


def evaluate(cfg: ExperimentConfig, prep: Prepared, best: dict) -> EvalReport:
    report = EvalReport(ir_modes=cfg.ir_modes)
    for method in cfg.methods:
        for d in cfg.dims:
            for kind in CurveKind:
                report.add(rolling_evaluate(
                    prep.p3[kind], prep.split.test, method, best[(method, d, kind)], d,
                    cfg.window_days, cfg.method_seed(method), cfg.fixed_settings(method)))
    return report


# artifact writers -----------------------------------------------------------

def _key(method, d, kind) -> str:
    return f"{method};{d};{kind.name.lower()}"


def _parse_key(text: str):
    method, d, kind = text.split(";")
    return method, int(d), CurveKind[kind.upper()]


def tuning_table(results: dict) -> str:
    lines = ["method;d;kind;point;params;val_rmse;error"]
    for (method, d, kind), res in results.items():
        for i, (params, score, err) in enumerate(res.table):
            score_txt = "" if score is None else repr(score)
            lines.append(f"{_key(method, d, kind)};{i};{json.dumps(params, sort_keys=True)};"
                         f"{score_txt};{err}")
    return "\n".join(lines) + "\n"


def dump_best(results: dict) -> str:
    payload = {_key(*key): res.best for key, res in results.items()}
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def load_best(path) -> dict:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return {_parse_key(k): v for k, v in payload.items()}


def report_to_json(report: EvalReport) -> str:
    entries = []
    for (method, d), per_kind in sorted(report.results.items()):
        for kind, r in sorted(per_kind.items(), key=lambda kv: kv[0].value):
            entries.append({
                "method": method, "d": d, "kind": kind.name.lower(),
                "raw": r.raw.as_dict(), "repaired": r.repaired.as_dict(),
                "n_refits": r.n_refits, "monotone_raw": r.monotone_raw,
                "monotone_repaired": r.monotone_repaired,
            })
    return json.dumps({"ir_modes": list(report.ir_modes), "results": entries},
                      indent=1, sort_keys=True) + "\n"


def report_from_json(text: str) -> EvalReport:
    payload = json.loads(text)
    report = EvalReport(ir_modes=tuple(payload["ir_modes"]))
    for e in payload["results"]:
        report.add(RollingResult(
            e["method"], e["d"], CurveKind[e["kind"].upper()], MetricSet(**e["raw"]),
            MetricSet(**e["repaired"]), e["n_refits"], e["monotone_raw"],
            e["monotone_repaired"]))
    return report


def emit_latent(latent: LatentMatrix) -> str:
    """Delimited latent codes: timestamp, hour of day, z1..zd."""
    zs = ";".join(f"z{i + 1}" for i in range(latent.dim))
    lines = [f"timestamp;hour;{zs}"]
    for ts, row in zip(latent.row_meta, latent.data):
        coords = ";".join(repr(float(v)) for v in row)
        lines.append(f"{ts:%Y-%m-%dT%H:00};{ts.hour};{coords}")
    return "\n".join(lines) + "\n"


def emit_reconstruction(model: Reducer, p4: CurveMatrix, row: int, ir: str = "both") -> str:
    """Original vs reconstructed (and isotonic-repaired) prices for one curve."""
    single = p4.rows([row])
    original = destandardize(single)
    recon = destandardize(model.reconstruct(single))
    columns = ["volume", "original"]
    series = [single.grid.points, original.data[0]]
    if ir in ("off", "both"):
        columns.append("reconstructed")
        series.append(recon.data[0])
    if ir in ("on", "both"):
        columns.append("repaired")
        series.append(repair_matrix(recon).data[0])
    lines = [";".join(columns)]
    for values in zip(*series):
        lines.append(";".join(repr(float(v)) for v in values))
    return "\n".join(lines) + "\n"


class ArtifactWriter:
    """Writes files under one output folder and remembers their digests."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.written: dict[str, str] = {}

    def path(self, name: str) -> Path:
        target = (self.out_dir / name).resolve()
        if self.out_dir.resolve() not in target.parents:
            raise ValueError(f"refusing to write outside {self.out_dir}: {name}")
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def text(self, name: str, content: str) -> Path:
        target = self.path(name)
        target.write_text(content, encoding="utf-8")
        self.written[name] = hashlib.sha256(content.encode("utf-8")).hexdigest()
        return target

    def model(self, name: str, model: Reducer) -> Path:
        target = self.path(name)
        save_model(model, target)
        self.written[name] = hashlib.sha256(target.read_bytes()).hexdigest()
        return target

    def manifest(self, cfg: ExperimentConfig, command: str) -> Path:
        import numba
        import scipy

        payload = {
            "command": command,
            "config_sha256": cfg.digest(),
            "config": cfg.values,
            "seed": cfg.seed,
            "seed_offsets": SEED_OFFSETS,
            "versions": {
                "curvelatent": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "numba": numba.__version__,
            },
            "artifacts": dict(sorted(self.written.items())),
        }
        return self.text("manifest.json", json.dumps(payload, indent=1, sort_keys=True) + "\n")


def run_all(cfg: ExperimentConfig) -> ArtifactWriter:
    """Full pipeline: preprocess, tune, fit final models, rolling evaluation, report."""
    writer = ArtifactWriter(cfg.out_dir)
    prep = prepare(cfg)
    writer.text("preprocess.cfg", prep.spec.dumps())
    results = tune(cfg, prep)
    writer.text("tuning.csv", tuning_table(results))
    writer.text("best_params.json", dump_best(results))
    best = {key: res.best for key, res in results.items()}
    for (method, d, kind), params in best.items():
        model = fit_final(cfg, prep, method, d, kind, params)
        writer.model(f"models/{method}_{d}d_{kind.name.lower()}.json", model)
    report = evaluate(cfg, prep, best)
    writer.text("results.json", report_to_json(report))
    writer.text("report.txt", report.to_text())
    writer.text("report.csv", report.to_delimited())
    writer.manifest(cfg, "run")
    return writer
