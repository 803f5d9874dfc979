"""Command line entry point: ``fairlens generate|train|analyze|evaluate|reproduce``.

Every step reads the experiment JSON given by ``--config`` and works inside the
``--out`` directory (default: the config's ``output_dir``), so the steps chain:
``generate`` writes CSV splits, ``train`` writes a checkpoint, ``analyze`` profiles
it on the training split and ``evaluate`` scores the test split.

Exit codes: 0 success, 2 configuration error, 3 numeric divergence, 4 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .bias import profile_model
from .datagen import save_csv
from .exceptions import ConfigError, DataError, DomainError, NumericError, ShapeError, TrainingDiverged
from .experiment import (
    build_datasets,
    evaluate_model,
    load_config,
    markdown_table,
    preset_config,
    preset_names,
    report_json,
    run_experiment,
    write_report,
)
from .model import ClassifierModel, load_checkpoint, save_checkpoint, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_DATA = 4

DEFAULTS_HELP = """\
training defaults (scaled down from the reference full-scale schedule for desk runtime):
  lr 0.1, momentum 0.9, weight decay 5e-4, batch 128, temperature 0.1
  epochs 60 [scaled down], step decay x0.1 every 20 epochs [scaled down]
  seeds 0-4 (five runs)
"""


def _write_json(path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _resolve(args):
    if getattr(args, "preset", None):
        cfg = preset_config(args.preset)
    elif args.config:
        cfg = load_config(args.config)
    else:
        raise ConfigError("--config is required", "")
    changes = {}
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.no_center:
        changes["centered"] = False
    if args.no_removal:
        changes["apply_removal"] = False
    if getattr(args, "data", None):
        changes["data_path"] = args.data
    cfg = cfg.with_overrides(**changes) if changes else cfg
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _data(cfg, out):
    """Datasets from ``out`` when ``generate`` has run there, else drawn from the config."""
    if cfg.data_path is None and (out / "train.csv").exists():
        cfg = cfg.with_overrides(data_path=str(out))
    return build_datasets(cfg, cfg.seeds[0])


def cmd_generate(args):
    cfg, out = _resolve(args)
    data = build_datasets(cfg.with_overrides(data_path=None), cfg.seeds[0])
    for name, ds in data.items():
        if ds is not None:
            save_csv(ds, out / f"{name}.csv")
    _write_json(out / "skew_table.json", {"skew_table": data["train"].skew_table.tolist()})
    print(f"wrote {', '.join(n for n, d in data.items() if d is not None)} to {out}")
    return EXIT_OK


def cmd_train(args):
    cfg, out = _resolve(args)
    data = _data(cfg, out)
    train_ds = data["train"]
    seed = cfg.seeds[0]
    n_out = train_ds.n_classes if cfg.task == "multiclass" else train_ds.n_labels
    model = ClassifierModel.create(
        cfg.encoder, cfg.variant, cfg.task, n_out, embed_dim=cfg.embed_dim,
        temperature=cfg.train.temperature, seed=seed, tied=cfg.tied,
    )
    tcfg = dataclasses.replace(cfg.train, seed=seed)
    try:
        model, history = train(model, train_ds, data["val"], tcfg)
    except TrainingDiverged as exc:
        _write_json(out / "history.json", {"history": exc.history, "diverged": str(exc)})
        raise
    save_checkpoint(model, out / "checkpoint.json")
    _write_json(out / "history.json", {"history": history})
    if history:
        last = history[-1]
        print(f"epoch {last['epoch']}: loss {last['loss']:.4f} train metric {last['train_metric']:.2f}")
    print(f"wrote checkpoint to {out / 'checkpoint.json'}")
    return EXIT_OK


def _checkpoint(args, out):
    return load_checkpoint(Path(args.checkpoint) if args.checkpoint else out / "checkpoint.json")


def cmd_analyze(args):
    cfg, out = _resolve(args)
    model = _checkpoint(args, out)
    train_ds = _data(cfg, out)["train"]
    profile = profile_model(model, train_ds, centered=cfg.centered)
    doc = profile.to_dict()
    control = profile_model(model, train_ds, centered=cfg.centered, shuffle_seed=cfg.seeds[0])
    doc["control"] = {"pc1_ratio": control.pc1_ratio, "ratios": control.ratios.tolist()}
    _write_json(out / "profile.json", _finite(doc))
    _write_json(out / "plot.json", profile.plot_payload())
    skew = "n/a" if doc["skewness"] is None else f"{doc['skewness']:.3f}"
    print(f"PC1 ratio {profile.pc1_ratio:.3f}, skewness {skew}, shuffled PC1 {control.pc1_ratio:.3f}")
    return EXIT_OK


def _finite(obj):
    if isinstance(obj, float) and obj != obj:
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    return obj


def cmd_evaluate(args):
    cfg, out = _resolve(args)
    model = _checkpoint(args, out)
    data = _data(cfg, out)
    skew = data["train"].skew_table
    doc = {"without_removal": evaluate_model(model, data["test"], skew)}
    if cfg.apply_removal and model.variant == "protected" and cfg.task != "binary":
        b = profile_model(model, data["train"], centered=cfg.centered).direction
        doc["with_removal"] = evaluate_model(model, data["test"], skew, bias_direction=b)
        doc["bias_direction_source"] = "train"
    _write_json(out / "evaluation.json", _finite(doc))
    for key in ("without_removal", "with_removal"):
        if key in doc:
            metrics = ", ".join(f"{k} {v:.4f}" for k, v in doc[key]["metrics"].items() if v is not None)
            print(f"{key}: {metrics}")
    return EXIT_OK


def cmd_reproduce(args):
    if args.list_presets:
        print("\n".join(preset_names()))
        return EXIT_OK
    cfg, out = _resolve(args)
    report = run_experiment(cfg)
    write_report(report, out)
    if args.no_timing:
        (out / "report.json").write_text(report_json(report, include_timing=False), encoding="utf-8")
    print(markdown_table(report), end="")
    print(f"wrote {out / 'report.json'} and {out / 'report.md'}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "analyze": cmd_analyze,
    "evaluate": cmd_evaluate,
    "reproduce": cmd_reproduce,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fairlens",
        description="Identify and mitigate attribute bias in classifier features and label embeddings.",
        epilog=DEFAULTS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"fairlens {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, epilog=DEFAULTS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="experiment JSON document")
        p.add_argument("--out", help="output directory (default: output_dir from the config)")
        p.add_argument("--seed", type=int, help="run this single seed instead of the config's list")
        p.add_argument("--no-center", action="store_true", help="uncentred PCA of the delta set")
        p.add_argument("--no-removal", action="store_true", help="skip the bias-removal arm")
        p.add_argument("--data", help="directory with train.csv/val.csv/test.csv to use instead of generating")
        if name in ("analyze", "evaluate"):
            p.add_argument("--checkpoint", help="checkpoint JSON (default: <out>/checkpoint.json)")
        if name == "reproduce":
            p.add_argument("--preset", help="named study; see --list-presets")
            p.add_argument("--list-presets", action="store_true", help="print the preset names and exit")
            p.add_argument("--no-timing", action="store_true", help="omit the timing section from report.json")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, ShapeError, DomainError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
