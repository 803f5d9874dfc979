"""Configuration-driven pipeline: data, training, bias profiling, removal, evaluation.

A run is described by one JSON document (:class:`ExperimentConfig`). For every seed
the pipeline draws the data, trains each arm, profiles the training features and
scores the test split. :func:`run_experiment` folds the per-seed results into a
report with per-seed values, mean/std/median aggregates and a markdown table.

The seed of a run drives the data draw, the weight initialisation and the batch
order; ``data.seed`` in the config is replaced by it. Everything except the
``timing`` key of the report is a deterministic function of the config.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import fairness
from .bias import profile_model
from .datagen import GenConfig, generate_extreme_bias, generate_synthetic, load_csv
from .exceptions import ConfigError, DataError
from .model import ClassifierModel, EncoderSpec, TrainConfig, predict, predict_scores, train

REPORT_FORMAT = "fairlens-report"
ARMS = ("baseline", "protected", "protected-tied")
REMOVAL_SUFFIX = "+removal"
METRIC_ORDER = (
    "accuracy", "map", "bias_amplification_noniid", "bias_amplification", "parity", "opportunity", "odds",
)

_NUMBER = {"type": "number"}
_INT = {"type": "integer"}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "task": {"enum": ["multiclass", "multilabel", "binary"]},
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_classes": {"type": "integer", "minimum": 2},
                "feature_dim": {"type": "integer", "minimum": 1},
                "n_per_class": {"type": "integer", "minimum": 2},
                "skew": {"type": "number", "minimum": 0.5, "maximum": 1.0},
                "spread": {"type": "number", "exclusiveMinimum": 0},
                "shift": {"type": "number", "minimum": 0},
                "shift_mode": {"enum": ["shared", "per-class"]},
                "task": {"enum": ["multiclass", "multilabel", "binary"]},
                "n_labels": {"type": "integer", "minimum": 0},
                "label_prevalence": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "label_skews": {
                    "type": ["array", "null"],
                    "items": {"type": "number", "minimum": 0.5, "maximum": 1.0},
                },
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "data_path": {"type": "string"},
        "test_per_class": {"type": "integer", "minimum": 2},
        "val_per_class": {"type": "integer", "minimum": 0},
        "encoder": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2},
        "embed_dim": {"type": "integer", "minimum": 1},
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lr": _NUMBER,
                "momentum": _NUMBER,
                "weight_decay": _NUMBER,
                "batch_size": _INT,
                "epochs": _INT,
                "schedule": {"enum": ["step", "exponential", "constant"]},
                "step_factor": _NUMBER,
                "step_period": _INT,
                "exp_decay": _NUMBER,
                "temperature": _NUMBER,
                "head_update": {"enum": ["matched", "both"]},
                "seed": _INT,
            },
        },
        "variant": {"enum": ["baseline", "protected"]},
        "tied": {"type": "boolean"},
        "arms": {"type": "array", "items": {"enum": list(ARMS)}, "minItems": 1, "uniqueItems": True},
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"centered": {"type": "boolean"}, "apply_removal": {"type": "boolean"}},
        },
        "output_dir": {"type": "string"},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
    },
}


def _pointer(path):
    return "".join(f"/{p}" for p in path)


def validate_document(doc):
    """Check ``doc`` against :data:`CONFIG_SCHEMA`; raise ConfigError with a JSON pointer."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    error = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if error is None:
        return
    path = list(error.absolute_path)
    if error.validator == "additionalProperties":
        extra = sorted(set(error.instance) - set(error.schema.get("properties", {})))
        if extra:
            raise ConfigError(f"unknown field '{extra[0]}'", _pointer(path + [extra[0]]))
    raise ConfigError(error.message, _pointer(path))


@dataclass
class ExperimentConfig:
    """One experiment: data source, model, training, analysis options and seeds."""

    name: str = "experiment"
    task: str = "multiclass"
    data: GenConfig = field(default_factory=GenConfig)
    data_path: str | None = None
    test_per_class: int | None = None
    val_per_class: int | None = None
    encoder: EncoderSpec | None = None
    embed_dim: int = 128
    train: TrainConfig = field(default_factory=TrainConfig)
    variant: str = "protected"
    tied: bool = False
    arms: tuple = ("baseline", "protected")
    centered: bool = True
    apply_removal: bool = True
    output_dir: str = "runs"
    seeds: tuple = (0, 1, 2, 3, 4)

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object", "")
        validate_document(doc)
        task = doc.get("task", "multiclass")
        data_doc = dict(doc.get("data", {}))
        if data_doc.get("task", task) != task:
            raise ConfigError(f"data task '{data_doc['task']}' contradicts task '{task}'", "/data/task")
        data_doc["task"] = task
        if task == "binary":
            if data_doc.get("n_classes", 2) != 2:
                raise ConfigError("binary task has exactly 2 classes", "/data/n_classes")
            data_doc["n_classes"] = 2
        data = GenConfig.from_dict(data_doc, "/data")
        train_cfg = TrainConfig.from_dict(doc.get("train", {}), "/train")
        widths = doc.get("encoder")
        if widths is None:
            widths = (data.feature_dim, 64, 64, 32)
        elif widths[0] != data.feature_dim and "data_path" not in doc:
            raise ConfigError(
                f"encoder input width {widths[0]} != data feature_dim {data.feature_dim}", "/encoder/0"
            )
        analysis = doc.get("analysis", {})
        cfg = cls(
            name=doc.get("name", "experiment"),
            task=task,
            data=data,
            data_path=doc.get("data_path"),
            test_per_class=doc.get("test_per_class"),
            val_per_class=doc.get("val_per_class"),
            encoder=EncoderSpec(tuple(widths)),
            embed_dim=doc.get("embed_dim", 128),
            train=train_cfg,
            variant=doc.get("variant", "protected"),
            tied=doc.get("tied", False),
            arms=tuple(doc.get("arms", ("baseline", "protected"))),
            centered=analysis.get("centered", True),
            apply_removal=analysis.get("apply_removal", True),
            output_dir=doc.get("output_dir", "runs"),
            seeds=tuple(doc.get("seeds", (0, 1, 2, 3, 4))),
        )
        if cfg.tied and cfg.variant != "protected":
            raise ConfigError("head tying only applies to the protected variant", "/tied")
        return cfg

    def to_dict(self):
        doc = {
            "name": self.name,
            "task": self.task,
            "data": self.data.to_dict(),
            "data_path": self.data_path,
            "test_per_class": self.test_per_class,
            "val_per_class": self.val_per_class,
            "encoder": list(self.encoder.widths),
            "embed_dim": self.embed_dim,
            "train": self.train.to_dict(),
            "variant": self.variant,
            "tied": self.tied,
            "arms": list(self.arms),
            "analysis": {"centered": self.centered, "apply_removal": self.apply_removal},
            "output_dir": self.output_dir,
            "seeds": list(self.seeds),
        }
        return {k: v for k, v in doc.items() if v is not None}

    def with_overrides(self, **changes):
        return dataclasses.replace(copy.deepcopy(self), **changes)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON ({exc})", "") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", "") from None
    return ExperimentConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# presets

PRESETS = {
    "cifar10s-synthetic": {
        "name": "cifar10s-synthetic",
        "task": "multiclass",
        "data": {"n_classes": 10, "feature_dim": 32, "n_per_class": 500, "skew": 0.95,
                 "spread": 1.5, "shift": 6.0, "shift_mode": "shared"},
        "encoder": [32, 64, 64, 32],
        "train": {"epochs": 60, "step_period": 20, "batch_size": 128, "temperature": 0.1},
        "arms": ["baseline", "protected"],
        "analysis": {"centered": True, "apply_removal": True},
        "seeds": [0, 1, 2, 3, 4],
    },
    "celeba-synthetic": {
        "name": "celeba-synthetic",
        "task": "multilabel",
        "data": {"feature_dim": 32, "n_per_class": 600, "n_labels": 8, "label_prevalence": 0.3,
                 "label_skews": [0.9, 0.8, 0.7, 0.6, 0.95, 0.85, 0.75, 0.65],
                 "spread": 1.5, "shift": 6.0},
        "encoder": [32, 64, 64, 32],
        "train": {"epochs": 15, "step_period": 10, "batch_size": 32, "temperature": 0.05, "lr": 0.01},
        "arms": ["baseline", "protected"],
        "analysis": {"centered": True, "apply_removal": True},
        "seeds": [0, 1, 2, 3, 4],
    },
    "imdb-eb-synthetic": {
        "name": "imdb-eb-synthetic",
        "task": "binary",
        "data": {"feature_dim": 32, "n_per_class": 1000, "skew": 1.0, "spread": 1.5, "shift": 6.0},
        "encoder": [32, 64, 64, 32],
        "train": {"epochs": 20, "schedule": "exponential", "exp_decay": 0.999, "temperature": 0.1,
                  "head_update": "both"},
        "arms": ["baseline", "protected"],
        "analysis": {"centered": True, "apply_removal": False},
        "seeds": [0, 1, 2, 3, 4],
    },
}


def preset_names():
    return sorted(PRESETS)


def preset_config(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}'; available: {', '.join(preset_names())}", "/preset")
    return ExperimentConfig.from_dict(copy.deepcopy(PRESETS[name]))


# ---------------------------------------------------------------------------
# data


def build_datasets(cfg, seed):
    """``{"train", "val", "test"[, "test_all"]}`` for one seed.

    Multiclass test sets pair every noise draw with both attribute values. Binary runs
    train on the confounded split and test on the crossed one; ``test_all`` holds all
    four (class, attribute) cells.
    """
    if cfg.data_path is not None:
        return load_datasets(cfg.data_path, cfg)
    gen = dataclasses.replace(cfg.data, seed=seed)
    if cfg.task == "binary":
        eb = generate_extreme_bias(gen, cfg.test_per_class)
        return {"train": eb["eb1"], "val": None, "test": eb["eb2"], "test_all": eb["test"]}
    n_val = cfg.val_per_class if cfg.val_per_class is not None else gen.n_per_class // 5
    n_test = cfg.test_per_class or gen.n_per_class
    out = {"train": generate_synthetic(gen, stream=1)}
    out["val"] = generate_synthetic(gen, n_per_class=n_val, stream=3) if n_val >= 2 else None
    if cfg.task == "multilabel":
        out["test"] = generate_synthetic(gen, n_per_class=n_test, stream=2)
    else:
        out["test"] = generate_synthetic(gen, n_per_class=n_test, stream=2, paired=True)
    return out


SPLIT_FILES = ("train", "val", "test", "test_all")


def load_datasets(directory, cfg):
    directory = Path(directory)
    n_classes = cfg.data.n_classes if cfg.task == "multiclass" else 0
    out = {}
    for name in SPLIT_FILES:
        path = directory / f"{name}.csv"
        if path.exists():
            out[name] = load_csv(path, task=cfg.task, n_classes=n_classes)
        else:
            out[name] = None
    for required in ("train", "test"):
        if out[required] is None:
            raise DataError(f"missing {required}.csv in {directory}")
    return out


# ---------------------------------------------------------------------------
# evaluation


def _model_for(cfg, arm, ds, seed):
    variant = "baseline" if arm == "baseline" else "protected"
    n_out = ds.n_classes if cfg.task == "multiclass" else ds.n_labels
    return ClassifierModel.create(
        cfg.encoder, variant, cfg.task, n_out, embed_dim=cfg.embed_dim,
        temperature=cfg.train.temperature, seed=seed, tied=arm == "protected-tied",
    )


def prediction_log(model, ds, bias_direction=None):
    """Features-only inference on ``ds``; attributes enter only through the log."""
    pred = predict(model, ds.features, bias_direction)
    if ds.task == "multilabel":
        scores = predict_scores(model, ds.features, bias_direction)
        return fairness.PredictionLog(ds.labels, pred, ds.attributes, task="multilabel", scores=scores)
    if ds.task == "binary":
        return fairness.PredictionLog(ds.class_labels, pred, ds.attributes, task="binary")
    return fairness.PredictionLog(ds.labels, pred, ds.attributes, n_classes=ds.n_classes)


def evaluate_model(model, ds, skew_table, bias_direction=None):
    """Task score and fairness metrics of ``model`` on ``ds`` (a fairness report dict)."""
    return fairness.fairness_report(prediction_log(model, ds, bias_direction), skew_table)


def profile_summary(model, train_ds, centered, bias_direction=None, shuffle_seed=None):
    """PC1 ratio and skewness of the training-feature profile; None for binary tasks."""
    if train_ds.task == "binary":
        return None
    prof = profile_model(model, train_ds, centered, bias_direction, shuffle_seed)
    return {"pc1_ratio": prof.pc1_ratio, "skewness": prof.skewness, "ratios": prof.ratios.tolist()}


def run_seed(cfg, seed):
    """Train and evaluate every arm for one seed; returns a JSON-ready dict."""
    data = build_datasets(cfg, seed)
    train_ds, val_ds, test_ds = data["train"], data["val"], data["test"]
    skew = train_ds.skew_table
    tcfg = dataclasses.replace(cfg.train, seed=seed)
    arms = {}
    histories = {}
    for arm in cfg.arms:
        model, history = train(_model_for(cfg, arm, train_ds, seed), train_ds, val_ds, tcfg)
        histories[arm] = history
        report = evaluate_model(model, test_ds, skew)
        entry = {"metrics": report["metrics"], "skipped_classes": report["skipped_classes"]}
        if data.get("test_all") is not None:
            entry["metrics_all_cells"] = evaluate_model(model, data["test_all"], skew)["metrics"]
        entry["profile"] = profile_summary(model, train_ds, cfg.centered)
        entry["control_profile"] = profile_summary(model, train_ds, cfg.centered, shuffle_seed=seed)
        arms[arm] = entry
        if cfg.apply_removal and arm != "baseline" and cfg.task != "binary":
            b = profile_model(model, train_ds, cfg.centered).direction
            report = evaluate_model(model, test_ds, skew, bias_direction=b)
            arms[arm + REMOVAL_SUFFIX] = {
                "metrics": report["metrics"],
                "skipped_classes": report["skipped_classes"],
                "profile": profile_summary(model, train_ds, cfg.centered, bias_direction=b),
                "bias_direction": b.tolist(),
                "bias_direction_source": "train",
            }
    return {"seed": seed, "arms": arms, "history": histories}


def _stats(values):
    vals = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    if not vals:
        return {"mean": None, "std": None, "median": None, "n": 0}
    arr = np.asarray(vals, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std()), "median": float(np.median(arr)),
            "n": len(vals)}


def aggregate(per_seed):
    """Mean, population std and median of every metric and profile field per arm."""
    out = {}
    arm_names = list(per_seed[0]["arms"])
    for arm in arm_names:
        entries = [r["arms"][arm] for r in per_seed]
        agg = {"metrics": {}}
        for key in entries[0]["metrics"]:
            agg["metrics"][key] = _stats([e["metrics"][key] for e in entries])
        for section in ("profile", "control_profile"):
            if entries[0].get(section):
                agg[section] = {
                    key: _stats([e[section][key] for e in entries]) for key in ("pc1_ratio", "skewness")
                }
        out[arm] = agg
    return out


def _jsonable(obj):
    if isinstance(obj, float):
        return None if math.isnan(obj) or math.isinf(obj) else obj
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def _worker_count(n_jobs):
    try:
        cap = int(os.environ.get("FAIRLENS_THREADS", "1"))
    except ValueError:
        raise ConfigError("FAIRLENS_THREADS must be an integer", "") from None
    return max(1, min(cap, n_jobs))


def run_experiment(cfg):
    """Run every seed and assemble the report (a JSON-ready dict)."""
    start = time.perf_counter()
    seeds = list(cfg.seeds)
    workers = _worker_count(len(seeds))
    timing = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_timed_seed, [cfg] * len(seeds), seeds))
    else:
        results = [_timed_seed(cfg, s) for s in seeds]
    per_seed = []
    for res, elapsed in results:
        per_seed.append(res)
        timing[str(res["seed"])] = elapsed
    report = {
        "format": REPORT_FORMAT,
        "version": 1,
        "config": cfg.to_dict(),
        "task": cfg.task,
        "per_seed": per_seed,
        "aggregate": aggregate(per_seed),
        "provenance": {
            "bias_direction": "computed from the training split of each seed",
            "test_attributes": "used only inside metric computation",
            "model_selection": "best validation mAP" if cfg.task == "multilabel" else "final epoch",
        },
        "conventions": dict(fairness.CONVENTIONS),
    }
    report = _jsonable(report)
    report["timing"] = {"per_seed_seconds": timing, "total_seconds": time.perf_counter() - start}
    return report


def _timed_seed(cfg, seed):
    t0 = time.perf_counter()
    res = run_seed(cfg, seed)
    return res, time.perf_counter() - t0


def report_json(report, include_timing=True):
    doc = report if include_timing else {k: v for k, v in report.items() if k != "timing"}
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _fmt(stat, scale):
    if stat["mean"] is None:
        return "n/a"
    return f"{stat['mean'] * scale:.2f} ± {stat['std'] * scale:.2f}"


def markdown_table(report):
    """Metric table (percent, mean ± std over seeds) followed by a profile table."""
    agg = report["aggregate"]
    arms = list(agg)
    first = agg[arms[0]]["metrics"]
    cols = [m for m in METRIC_ORDER if m in first]
    titles = {"accuracy": "Acc.", "map": "mAP", "bias_amplification_noniid": "Bias",
              "bias_amplification": "Bias vs skew", "parity": "Parity", "opportunity": "Opp.",
              "odds": "Odds"}
    lines = [f"## {report['config']['name']} ({len(report['per_seed'])} seeds)", ""]
    lines.append("| Method | " + " | ".join(titles[c] for c in cols) + " |")
    lines.append("|---" * (len(cols) + 1) + "|")
    for arm in arms:
        cells = []
        for c in cols:
            scale = 1.0 if c in ("accuracy", "map") else 100.0
            cells.append(_fmt(agg[arm]["metrics"][c], scale))
        lines.append(f"| {arm} | " + " | ".join(cells) + " |")
    profiled = [a for a in arms if "profile" in agg[a]]
    if profiled:
        lines += ["", "| Method | PC1 ratio | Skewness | Shuffled PC1 |", "|---|---|---|---|"]
        for arm in profiled:
            p = agg[arm]["profile"]
            ctrl = agg[arm].get("control_profile")
            lines.append(
                f"| {arm} | {_fmt(p['pc1_ratio'], 1.0)} | {_fmt(p['skewness'], 1.0)} | "
                f"{_fmt(ctrl['pc1_ratio'], 1.0) if ctrl else 'n/a'} |"
            )
    return "\n".join(lines) + "\n"


def write_report(report, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report_json(report), encoding="utf-8")
    (out / "report.md").write_text(markdown_table(report), encoding="utf-8")
    return out / "report.json"
