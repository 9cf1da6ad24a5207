"""Batch command-line driver for the pipeline stages.

Every subcommand resolves its configuration (file plus flag overrides), runs
one stage, and writes self-describing outputs: the resolved ``run_config.json``
sits next to each stage's artifacts so reruns are reproducible.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import yaml

from . import __version__
from . import data as ds
from . import evaluation as ev
from . import explain as ex
from . import symreg as sr
from .errors import (DistillationError, PhysioFormerError, TrainingError)
from .model import ModelConfig, PhysioFormer, load_checkpoint, save_checkpoint
from .signals import WindowPlan
from .training import TrainConfig, train

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_TRAINING = 3
EXIT_DISTILL = 4

DATA_ENV = "PHYSIOFORMER_DATA"


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    text = Path(path).read_text()
    if path.endswith((".yaml", ".yml")):
        return yaml.safe_load(text) or {}
    return json.loads(text)


def _resolve_config(args: argparse.Namespace) -> dict:
    cfg = _load_config_file(getattr(args, "config", None))
    cfg.setdefault("filter", {})
    cfg.setdefault("window", {})
    cfg.setdefault("model", {})
    cfg.setdefault("train", {})
    cfg.setdefault("symreg", {})
    if getattr(args, "window", None) is not None:
        cfg["window"]["length_s"] = args.window
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    if getattr(args, "device", None) is not None:
        cfg["device"] = args.device
    if getattr(args, "hidden", None) is not None:
        cfg["model"]["hidden_contrib"] = args.hidden
        cfg["model"]["hidden_affect"] = args.hidden
    if getattr(args, "lam", None) is not None:
        cfg["train"]["lam"] = args.lam
    if getattr(args, "no_embedding", False):
        cfg["model"]["no_embedding"] = True
    if getattr(args, "no_attributes", False):
        cfg["model"]["no_attributes"] = True
    cfg["version"] = __version__
    return cfg


def _write_run_config(out_dir: Path, cfg: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "run_config.json", "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _data_dir(args: argparse.Namespace, attr: str = "data") -> Path:
    value = getattr(args, attr, None) or os.environ.get(DATA_ENV)
    if not value:
        raise PhysioFormerError(
            f"no data directory given; pass --{attr.replace('_', '-')} or set {DATA_ENV}")
    return Path(value)


def _model_config(dataset: ds.Dataset, cfg: dict) -> ModelConfig:
    model_cfg = dict(cfg.get("model", {}))
    model_cfg.setdefault("seed", cfg.get("seed", 0))
    return ModelConfig.from_dataset(dataset, **model_cfg)


def _train_config(cfg: dict) -> TrainConfig:
    train_cfg = dict(cfg.get("train", {}))
    train_cfg.setdefault("seed", cfg.get("seed", 0))
    return TrainConfig(**train_cfg)


def _symreg_config(cfg: dict) -> sr.SymRegConfig:
    sym_cfg = dict(cfg.get("symreg", {}))
    sym_cfg.setdefault("seed", cfg.get("seed", 0))
    return sr.SymRegConfig(**sym_cfg)


# ---------------------------------------------------------------------------
# Subcommands

def cmd_preprocess(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    in_dir = _data_dir(args, "in_dir")
    out_dir = Path(args.out)
    device = cfg.get("device", "wrist")
    plan = WindowPlan(cfg["window"].get("length_s", 30.0))
    dataset = ds.load(in_dir, device, plan, cfg.get("filter"),
                      provenance={"stage": "preprocess", "seed": cfg["seed"]})
    ds.save_features(dataset, out_dir)
    _write_run_config(out_dir, cfg)
    print(f"preprocess: {len(dataset.subjects)} subjects, "
          f"{dataset.total_windows()} windows, catalog {dataset.catalog_hash()[:12]}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    dataset = ds.load_features(_data_dir(args))
    out_dir = Path(args.out)
    model = PhysioFormer(_model_config(dataset, cfg))
    train_cfg = _train_config(cfg)
    split = ds.split_stratified(dataset, train_cfg.test_fraction, train_cfg.seed)
    model, report = train(model, dataset, train_cfg, split)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out_dir / "checkpoint.json", dataset.catalog_hash())
    with open(out_dir / "train_report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run_config(out_dir, cfg)
    heldout = ev.evaluate_model(model, dataset, split.test)
    print(f"train: best epoch {report.best_epoch}, "
          f"held-out acc {heldout.acc:.4f} ({report.stopping_reason})")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    dataset = ds.load_features(_data_dir(args))
    model = load_checkpoint(args.model, dataset.catalog_hash())
    index_map = None
    if args.heldout:
        train_cfg = _train_config(cfg)
        index_map = ds.split_stratified(dataset, train_cfg.test_fraction,
                                        train_cfg.seed).test
    report = ev.evaluate_model(model, dataset, index_map)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "metrics.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run_config(out_dir, cfg)
    print(f"evaluate: acc {report.acc:.4f}, macro F1 {report.f1_macro:.4f}, "
          f"mse {report.mse:.4f} over {report.n} windows")
    return EXIT_OK


def cmd_study(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    train_cfg = _train_config(cfg)
    overrides = dict(cfg.get("model", {}))
    out_dir = Path(args.out)
    if args.kind == "window_sweep":
        device = cfg.get("device", "wrist")
        recordings = [ds.read_recording(p, device)
                      for p in sorted(_data_dir(args).iterdir()) if p.is_dir()]
        report = ev.run_study(args.kind, recordings, train_cfg, overrides)
    else:
        dataset = ds.load_features(_data_dir(args))
        report = ev.run_study(args.kind, dataset, train_cfg, overrides)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"study_{args.kind}.csv").write_text(ev.study_table_csv(report))
    with open(out_dir / f"study_{args.kind}.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run_config(out_dir, cfg)
    print(f"study {args.kind}: {len(report.rows)} configurations")
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    dataset = ds.load_features(_data_dir(args))
    model = load_checkpoint(args.model, dataset.catalog_hash())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for group in model.config.groups:
        scores = ex.importance(model, ex.AFFECT_TARGET, group, dataset)
        lines = ["feature,score"]
        lines += [f"{n},{repr(float(v))}" for n, v in zip(scores.names, scores.scores)]
        (out_dir / f"importance_{group}.csv").write_text("\n".join(lines) + "\n")
    names, groups, mat = ex.importance_matrix(model, dataset)
    lines = ["feature," + ",".join(groups)]
    for i, name in enumerate(names):
        lines.append(name + "," + ",".join(repr(float(v)) for v in mat[i]))
    (out_dir / "importance_matrix.csv").write_text("\n".join(lines) + "\n")
    _write_run_config(out_dir, cfg)
    print(f"explain: wrote importance for {len(groups)} indicator groups")
    return EXIT_OK


def _distill_group(payload) -> "sr.LawReport":
    model, dataset, group, sym_cfg, target = payload
    return sr.distill(model, dataset, group, sym_cfg, target=target)


def cmd_distill(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    dataset = ds.load_features(_data_dir(args))
    model = load_checkpoint(args.model, dataset.catalog_hash())
    sym_cfg = _symreg_config(cfg)
    groups = [args.indicator] if args.indicator else list(model.config.groups)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = max(1, args.jobs)
    payloads = [(model, dataset, g, sym_cfg, args.target) for g in groups]
    if jobs > 1 and len(groups) > 1:
        # per-group seeds are fixed, so scheduling cannot change any result
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=min(jobs, len(groups))) as pool:
            reports = list(pool.map(_distill_group, payloads))
    else:
        reports = [_distill_group(p) for p in payloads]
    for report in reports:
        sr.write_law_report(report, out_dir)
        print(f"distill {report.group}: "
              f"{report.selected.expr.to_infix(report.feature_names)} "
              f"(complexity {report.selected.complexity}, R^2 {report.r2:.4f})")
    _write_run_config(out_dir, cfg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="physioformer",
        description="Affective-state pipeline: preprocess, train, evaluate, "
                    "study, explain, distill.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, data_flag: bool = True):
        p.add_argument("--config", help="YAML or JSON configuration file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=1,
                       help="worker cap for parallel stages")
        if data_flag:
            p.add_argument("--data", help=f"input directory (default ${DATA_ENV})")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("preprocess", help="raw recordings -> feature files")
    p.add_argument("--in", dest="in_dir", help=f"raw data directory (default ${DATA_ENV})")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--device", choices=("wrist", "chest"))
    p.add_argument("--window", type=float, choices=(30.0, 60.0, 90.0, 120.0))
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="feature files -> checkpoint")
    common(p)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--no-embedding", action="store_true")
    p.add_argument("--no-attributes", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="checkpoint + features -> metrics.json")
    common(p)
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--heldout", action="store_true",
                   help="evaluate only the seeded held-out split")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("study", help="comparison tables for sweeps and ablations")
    common(p)
    p.add_argument("--kind", required=True, choices=ev.STUDY_KINDS)
    p.add_argument("--device", choices=("wrist", "chest"))
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("explain", help="feature importance tables")
    common(p)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("distill", help="symbolic laws per indicator group")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--indicator", help="restrict to one indicator group")
    p.add_argument("--target", default=sr.AFFECT_TARGET,
                   choices=(sr.AFFECT_TARGET, sr.CONTRIB_TARGET))
    p.set_defaults(func=cmd_distill)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingError as exc:
        print(f"training fault: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except DistillationError as exc:
        print(f"distillation fault: {exc}", file=sys.stderr)
        return EXIT_DISTILL
    except (PhysioFormerError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
