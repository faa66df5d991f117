"""Command line driver.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path

from .curves import CurveKind
from .errors import ConfigError, DataError, NumericalError
from .experiment import (
    ArtifactWriter,
    ExperimentConfig,
    dump_best,
    emit_latent,
    emit_reconstruction,
    evaluate,
    fit_final,
    load_best,
    load_dataset,
    prepare,
    report_from_json,
    report_to_json,
    run_all,
    tune,
    tuning_table,
)
from .ingestion import serialize_dataset

log = logging.getLogger("curvelatent")

COMMANDS = ("run", "generate", "ingest", "preprocess", "tune", "evaluate", "report",
            "emit-latent", "emit-recon")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curvelatent", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="experiment config file")
    parser.add_argument("--out", help="output directory (overrides 'out')")
    parser.add_argument("--seed", type=int, help="base seed (overrides 'seed')")
    parser.add_argument("--method", choices=("pca", "kpca", "umap", "ae"),
                        help="restrict to one method (overrides 'methods')")
    parser.add_argument("--dim", type=int, choices=(2, 3), help="restrict to one latent dimension")
    parser.add_argument("--ir", choices=("on", "off", "both"), help="isotonic repair mode")
    parser.add_argument("--timestamp", help="curve hour for emit-recon, 'YYYY-MM-DD HH'")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args) -> ExperimentConfig:
    overrides = {"seed": args.seed, "methods": args.method, "dims": args.dim, "ir": args.ir}
    if args.config is None:
        cfg = ExperimentConfig.parse("", Path.cwd(), overrides)
    else:
        cfg = ExperimentConfig.load(args.config, overrides)
    if args.out is not None:
        cfg.values["out"] = str(Path(args.out).resolve())
    return cfg


def _best_params(cfg, prep, writer):
    path = cfg.out_dir / "best_params.json"
    wanted = [(m, d, k) for m in cfg.methods for d in cfg.dims for k in CurveKind]
    if path.is_file():
        best = load_best(path)
        if all(key in best for key in wanted):
            return best
    log.info("no stored tuning for this selection; running grid search")
    results = tune(cfg, prep)
    writer.text("tuning.csv", tuning_table(results))
    writer.text("best_params.json", dump_best(results))
    return {key: res.best for key, res in results.items()}


def _matrix_text(m) -> str:
    head = "timestamp;" + ";".join(repr(float(q)) for q in m.grid.points)
    rows = [f"{ts:%Y-%m-%dT%H:00};" + ";".join(repr(float(v)) for v in row)
            for ts, row in zip(m.row_meta, m.data)]
    return "\n".join([head, *rows]) + "\n"


def dispatch(command: str, cfg: ExperimentConfig, args) -> None:
    if command == "run":
        run_all(cfg)
        print((cfg.out_dir / "report.txt").read_text(encoding="utf-8"), end="")
        return

    writer = ArtifactWriter(cfg.out_dir)
    if command == "generate":
        dataset = load_dataset(cfg)
        writer.text("curves.csv", serialize_dataset(dataset).decode("utf-8"))
        print(f"wrote {len(dataset)} hours to {writer.path('curves.csv')}")
    elif command == "ingest":
        dataset = load_dataset(cfg)
        lines = ["date;hour;price;volume"]
        for ts in dataset.timestamps:
            price, volume = dataset.clearing[ts]
            lines.append(f"{ts:%Y-%m-%d};{ts.hour};{price!r};{volume!r}")
        writer.text("clearing.csv", "\n".join(lines) + "\n")
        print(f"{len(dataset)} hours over {len(dataset.dates)} days")
    elif command == "preprocess":
        prep = prepare(cfg)
        writer.text("preprocess.cfg", prep.spec.dumps())
        for kind, m in prep.p3.items():
            writer.text(f"p3_{kind.name.lower()}.csv", _matrix_text(m))
        print(f"price grid {prep.spec.price_grid}, volume grid N={prep.spec.volume_grid.count}")
    elif command == "tune":
        prep = prepare(cfg)
        results = tune(cfg, prep)
        writer.text("tuning.csv", tuning_table(results))
        writer.text("best_params.json", dump_best(results))
        for (method, d, kind), res in results.items():
            model = fit_final(cfg, prep, method, d, kind, res.best)
            writer.model(f"models/{method}_{d}d_{kind.name.lower()}.json", model)
            print(f"{method} {d}d {kind.name.lower()}: {res.best} (val RMSE {res.best_score:.4f})")
    elif command == "evaluate":
        prep = prepare(cfg)
        report = evaluate(cfg, prep, _best_params(cfg, prep, writer))
        writer.text("results.json", report_to_json(report))
        writer.text("report.txt", report.to_text())
        writer.text("report.csv", report.to_delimited())
        print(report.to_text(), end="")
    elif command == "report":
        path = cfg.out_dir / "results.json"
        if not path.is_file():
            raise DataError(f"no evaluation results at {path}; run 'evaluate' first")
        report = report_from_json(path.read_text(encoding="utf-8"))
        writer.text("report.txt", report.to_text())
        writer.text("report.csv", report.to_delimited())
        print(report.to_text(), end="")
    elif command in ("emit-latent", "emit-recon"):
        prep = prepare(cfg)
        best = _best_params(cfg, prep, writer)
        stamp = _pick_timestamp(args.timestamp, prep) if command == "emit-recon" else None
        for method in cfg.methods:
            for d in cfg.dims:
                for kind in CurveKind:
                    model = fit_final(cfg, prep, method, d, kind, best[(method, d, kind)])
                    tag = f"{method}_{d}d_{kind.name.lower()}"
                    if command == "emit-latent":
                        p4 = prep.p4(kind, prep.dataset.dates)
                        writer.text(f"latent_{tag}.csv", emit_latent(model.encode(p4)))
                    else:
                        p4 = prep.p4(kind, [stamp.date()])
                        row = p4.row_meta.index(stamp)
                        name = f"recon_{tag}_{stamp:%Y%m%d%H}.csv"
                        writer.text(name, emit_reconstruction(model, p4, row, cfg.values["ir"]))
        print(f"wrote {len(writer.written)} file(s) to {cfg.out_dir}")
    writer.manifest(cfg, command)


def _pick_timestamp(text, prep) -> datetime:
    if text is None:
        day = prep.split.test[0]
        return next(ts for ts in prep.dataset.timestamps if ts.date() == day)
    try:
        stamp = datetime.strptime(text, "%Y-%m-%d %H")
    except ValueError:
        raise ConfigError(f"--timestamp {text!r} is not 'YYYY-MM-DD HH'") from None
    if stamp not in set(prep.dataset.timestamps):
        raise DataError(f"no curves for hour {text}")
    return stamp


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        dispatch(args.command, cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
