"""Synthetic datasets with a controlled attribute skew per class.

Each class is a Gaussian cluster around a centre drawn from N(0, I). Samples with
attribute ``v = 1`` are shifted by ``shift * u`` where ``u`` is a unit direction
(shared by all classes, or one per class). The first ``ceil(K/2)`` classes are
skewed toward ``v = 1`` and the rest toward ``v = 0``, with ``floor(skew * n)``
samples of the dominant attribute in every class.

The geometry is our own construction; it only mimics the structure of a skewed
training set such as a colour/grey split, not any real image distribution.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DataError
from .numeric import SeededRNG

TASKS = ("multiclass", "multilabel", "binary")
SHIFT_MODES = ("shared", "per-class")


@dataclass
class GenConfig:
    """Parameters of the synthetic generator.

    For ``task="multilabel"`` the dataset holds ``2 * n_per_class`` samples, half of
    each attribute value, with ``n_labels`` binary labels. ``label_prevalence`` is the
    fraction of positives per label and the skew applies to the positives.
    """

    n_classes: int = 10
    feature_dim: int = 32
    n_per_class: int = 500
    skew: float = 0.95
    spread: float = 1.0
    shift: float = 4.0
    shift_mode: str = "shared"
    task: str = "multiclass"
    n_labels: int = 0
    label_prevalence: float = 0.3
    label_skews: list | None = None
    seed: int = 0

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}", "/task")
        if self.shift_mode not in SHIFT_MODES:
            raise ConfigError(f"shift_mode must be one of {SHIFT_MODES}", "/shift_mode")
        if self.task == "multiclass" and self.n_classes < 2:
            raise ConfigError("need at least 2 classes", "/n_classes")
        if self.feature_dim < 1:
            raise ConfigError("must be >= 1", "/feature_dim")
        if self.n_per_class < 2:
            raise ConfigError("per-class count must be >= 2", "/n_per_class")
        if not 0.5 <= self.skew <= 1.0:
            raise ConfigError("skew must lie in [0.5, 1]", "/skew")
        if not self.spread > 0:
            raise ConfigError("spread must be > 0", "/spread")
        if not self.shift >= 0:
            raise ConfigError("shift must be >= 0", "/shift")
        if self.task == "multilabel":
            if self.n_labels < 1:
                raise ConfigError("multilabel task needs n_labels >= 1", "/n_labels")
            if not 0.0 < self.label_prevalence < 1.0:
                raise ConfigError("must lie in (0, 1)", "/label_prevalence")
            if self.label_skews is not None:
                if len(self.label_skews) != self.n_labels:
                    raise ConfigError("length must equal n_labels", "/label_skews")
                for i, s in enumerate(self.label_skews):
                    if not 0.5 <= s <= 1.0:
                        raise ConfigError("skew must lie in [0.5, 1]", f"/label_skews/{i}")
        return self

    @classmethod
    def from_dict(cls, d, pointer=""):
        names = {f.name for f in dataclasses.fields(cls)}
        for key in d:
            if key not in names:
                raise ConfigError(f"unknown field '{key}'", f"{pointer}/{key}")
        cfg = cls(**d)
        try:
            return cfg.validate()
        except ConfigError as exc:
            raise ConfigError(exc.message, pointer + exc.pointer) from None

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class Dataset:
    """Features, labels and binary protected attribute of a set of samples.

    ``labels`` is 1-D (class index) for multiclass, and ``(N, C)`` binary for the
    multilabel and binary tasks (binary uses ``C = 1``).
    """

    features: np.ndarray
    labels: np.ndarray
    attributes: np.ndarray
    task: str = "multiclass"
    n_classes: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.attributes = np.asarray(self.attributes, dtype=np.int64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if self.task in ("multilabel", "binary") and labels.ndim == 1:
            labels = labels[:, None]
        self.labels = labels
        if self.features.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {self.features.shape}")
        n = self.features.shape[0]
        if self.labels.shape[0] != n or self.attributes.shape != (n,):
            raise DataError("features, labels and attributes disagree on sample count")
        if not np.all(np.isin(self.attributes, (0, 1))):
            raise DataError("attributes must be 0 or 1")
        if self.task == "multiclass":
            if self.labels.ndim != 1:
                raise DataError("multiclass labels must be 1-D")
            if self.n_classes == 0 and n:
                self.n_classes = int(self.labels.max()) + 1
            if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
                raise DataError("label out of range")
        else:
            if not np.all(np.isin(self.labels, (0, 1))):
                raise DataError("multilabel/binary labels must be 0 or 1")
            if self.task == "binary":
                if self.labels.shape[1] != 1:
                    raise DataError("binary task has exactly one label column")
                self.n_classes = 2

    def __len__(self):
        return self.features.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.task == other.task
            and self.n_classes == other.n_classes
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.attributes, other.attributes)
        )

    @property
    def feature_dim(self):
        return self.features.shape[1]

    @property
    def n_labels(self):
        return self.labels.shape[1] if self.labels.ndim == 2 else 0

    @property
    def class_labels(self):
        """1-D class index for multiclass and binary datasets."""
        if self.task == "multiclass":
            return self.labels
        if self.task == "binary":
            return self.labels[:, 0]
        raise DataError("multilabel dataset has no single class label")

    def cell_counts(self):
        """``N[r, v]``: samples of class r (or positives of label r) with attribute v."""
        if self.task == "multilabel":
            pos = self.labels.astype(np.int64)
            return np.stack([pos[self.attributes == v].sum(0) for v in (0, 1)], axis=1)
        k = self.n_classes
        counts = np.zeros((k, 2), dtype=np.int64)
        np.add.at(counts, (self.class_labels, self.attributes), 1)
        return counts

    @property
    def skew_table(self):
        """``s(y, v) = N_y^v / (N_y^0 + N_y^1)``; NaN rows for empty classes."""
        counts = self.cell_counts().astype(np.float64)
        total = counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(total > 0, counts / total, np.nan)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.features[idx],
            self.labels[idx],
            self.attributes[idx],
            task=self.task,
            n_classes=self.n_classes,
            meta=dict(self.meta),
        )


def _geometry(cfg):
    rng = SeededRNG(cfg.seed).child(0)
    n_rows = cfg.n_labels if cfg.task == "multilabel" else (2 if cfg.task == "binary" else cfg.n_classes)
    centers = rng.normal((n_rows, cfg.feature_dim))
    if cfg.shift_mode == "shared":
        u = rng.unit_vector(cfg.feature_dim)
        directions = np.tile(u, (n_rows, 1))
    else:
        directions = np.stack([rng.unit_vector(cfg.feature_dim) for _ in range(n_rows)])
    return centers, directions


def dominant_attribute(row, n_rows):
    """Attribute value a class (or label) is skewed toward: first half -> 1."""
    return 1 if row < math.ceil(n_rows / 2) else 0


def generate_synthetic(cfg, *, skew=None, n_per_class=None, stream=1, paired=False):
    """Draw a dataset from the generator described by ``cfg``.

    ``skew`` and ``n_per_class`` override the config for this draw; ``stream`` picks an
    independent sample stream sharing the same class geometry (train/test draws).
    With ``paired=True`` every base sample appears twice, once per attribute value,
    which gives a perfectly balanced evaluation set.
    """
    cfg.validate()
    if cfg.task == "multilabel":
        return _generate_multilabel(cfg, skew=skew, n_per_group=n_per_class, stream=stream)
    rho = cfg.skew if skew is None else skew
    n = cfg.n_per_class if n_per_class is None else n_per_class
    if n < 2:
        raise ConfigError("per-class count must be >= 2", "/n_per_class")
    if not 0.5 <= rho <= 1.0:
        raise ConfigError("skew must lie in [0.5, 1]", "/skew")
    centers, directions = _geometry(cfg)
    k, d = centers.shape
    rng = SeededRNG(cfg.seed).child(stream)

    feats, labels, attrs = [], [], []
    for y in range(k):
        noise = rng.normal((n, d))
        if paired:
            v = np.concatenate([np.zeros(n, np.int64), np.ones(n, np.int64)])
            noise = np.concatenate([noise, noise])
        else:
            dom = dominant_attribute(y, k)
            n_dom = int(math.floor(rho * n))
            v = np.where(np.arange(n) < n_dom, dom, 1 - dom)
        x = centers[y] + cfg.spread * noise + (v[:, None] == 1) * cfg.shift * directions[y]
        feats.append(x)
        labels.append(np.full(len(v), y))
        attrs.append(v)
    X = np.concatenate(feats)
    Y = np.concatenate(labels)
    V = np.concatenate(attrs)
    order = rng.permutation(len(V))
    return Dataset(
        X[order],
        Y[order],
        V[order],
        task=cfg.task,
        n_classes=k,
        meta={"generator": cfg.to_dict(), "stream": stream, "paired": paired},
    )


def _generate_multilabel(cfg, skew=None, n_per_group=None, stream=1):
    n_group = cfg.n_per_class if n_per_group is None else n_per_group
    c = cfg.n_labels
    if skew is not None:
        skews = [skew] * c
    elif cfg.label_skews is not None:
        skews = list(cfg.label_skews)
    else:
        skews = [cfg.skew] * c
    offsets, directions = _geometry(cfg)
    rng = SeededRNG(cfg.seed).child(stream)
    n = 2 * n_group
    V = np.repeat([0, 1], n_group)
    Y = np.zeros((n, c), dtype=np.int64)
    groups = [np.flatnonzero(V == v) for v in (0, 1)]
    for label in range(c):
        n_pos = int(round(cfg.label_prevalence * n))
        dom = dominant_attribute(label, c)
        n_dom = min(int(math.floor(skews[label] * n_pos)), n_group)
        n_other = min(n_pos - n_dom, n_group)
        for v, count in ((dom, n_dom), (1 - dom, n_other)):
            chosen = groups[v][rng.permutation(n_group)[:count]]
            Y[chosen, label] = 1
    noise = rng.normal((n, cfg.feature_dim))
    X = cfg.spread * noise + Y @ offsets + (V[:, None] == 1) * cfg.shift * directions[0]
    order = rng.permutation(n)
    return Dataset(
        X[order],
        Y[order],
        V[order],
        task="multilabel",
        n_classes=0,
        meta={"generator": cfg.to_dict(), "stream": stream},
    )


def generate_extreme_bias(cfg, n_test_per_cell=None):
    """Binary splits where class and attribute are fully confounded.

    ``eb1`` holds (y, v) in {(0, 0), (1, 1)}, ``eb2`` the crossed pairs
    {(0, 1), (1, 0)}, and ``test`` all four cells. Each EB cell has
    ``n_per_class`` samples.
    """
    if cfg.task != "binary":
        raise ConfigError("extreme-bias splits need task='binary'", "/task")
    cfg.validate()
    centers, directions = _geometry(cfg)
    d = cfg.feature_dim
    n_test = n_test_per_cell or max(2, cfg.n_per_class // 2)

    def draw(cells, n, stream):
        rng = SeededRNG(cfg.seed).child(stream)
        feats, labels, attrs = [], [], []
        for y, v in cells:
            x = centers[y] + cfg.spread * rng.normal((n, d)) + v * cfg.shift * directions[y]
            feats.append(x)
            labels.append(np.full(n, y))
            attrs.append(np.full(n, v))
        order = rng.permutation(n * len(cells))
        return Dataset(
            np.concatenate(feats)[order],
            np.concatenate(labels)[order],
            np.concatenate(attrs)[order],
            task="binary",
            meta={"generator": cfg.to_dict(), "stream": stream},
        )

    return {
        "eb1": draw([(0, 0), (1, 1)], cfg.n_per_class, 11),
        "eb2": draw([(0, 1), (1, 0)], cfg.n_per_class, 12),
        "test": draw([(0, 0), (0, 1), (1, 0), (1, 1)], n_test, 13),
    }


def _largest_remainder(n, fractions):
    raw = np.asarray(fractions) * n
    counts = np.floor(raw).astype(np.int64)
    short = n - counts.sum()
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def split(ds, fractions, seed=0):
    """Stratified disjoint split by (class, attribute) cell.

    Multilabel datasets are stratified by attribute only. Indices inside each part
    keep their original order.
    """
    fractions = [float(f) for f in fractions]
    if not fractions or any(f <= 0 for f in fractions):
        raise ConfigError("split fractions must be positive", "/fractions")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError("split fractions must sum to 1", "/fractions")
    if len(fractions) == 1:
        return (ds.subset(np.arange(len(ds))),)

    if ds.task == "multilabel":
        keys = ds.attributes
    else:
        keys = ds.class_labels * 2 + ds.attributes
    rng = SeededRNG(seed).child(7)
    parts = [[] for _ in fractions]
    for key in np.unique(keys):
        idx = np.flatnonzero(keys == key)
        if len(idx) < len(fractions):
            raise DataError(
                f"cell {divmod(int(key), 2) if ds.task != 'multilabel' else int(key)} has "
                f"{len(idx)} samples, fewer than {len(fractions)} splits"
            )
        idx = idx[rng.permutation(len(idx))]
        counts = _largest_remainder(len(idx), fractions)
        start = 0
        for part, cnt in zip(parts, counts):
            part.append(idx[start : start + cnt])
            start += cnt
    return tuple(ds.subset(np.sort(np.concatenate(p))) for p in parts)


def _header(ds):
    cols = [f"f{i}" for i in range(ds.feature_dim)]
    if ds.task == "multiclass":
        cols.append("label")
    else:
        cols.extend(f"l{i}" for i in range(ds.n_labels))
    cols.append("attr")
    return cols


def save_csv(ds, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(_header(ds)) + "\n")
        labels = ds.labels if ds.labels.ndim == 2 else ds.labels[:, None]
        for x, y, v in zip(ds.features, labels, ds.attributes):
            row = [format(float(f), ".17g") for f in x]
            row.extend(str(int(t)) for t in y)
            row.append(str(int(v)))
            fh.write(",".join(row) + "\n")


def load_csv(path, task=None, n_classes=0):
    """Read a dataset written by :func:`save_csv`.

    The task is inferred from the header: a ``label`` column means multiclass, one
    ``l0`` column binary, several ``l*`` columns multilabel.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows) < 2:
        raise DataError("no samples")
    header = rows[0]
    if not header or header[-1] != "attr":
        raise DataError("last column must be 'attr'", line=1)
    n_feat = 0
    while n_feat < len(header) and header[n_feat] == f"f{n_feat}":
        n_feat += 1
    if n_feat == 0:
        raise DataError("expected feature columns f0..f{D-1}", line=1)
    label_cols = header[n_feat:-1]
    if label_cols == ["label"]:
        inferred = "multiclass"
    elif label_cols and label_cols == [f"l{i}" for i in range(len(label_cols))]:
        inferred = "binary" if len(label_cols) == 1 else "multilabel"
    else:
        raise DataError(f"unrecognised label columns {label_cols}", line=1)
    task = task or inferred

    width = len(header)
    X = np.empty((len(rows) - 1, n_feat))
    Y = np.empty((len(rows) - 1, len(label_cols)), dtype=np.int64)
    V = np.empty(len(rows) - 1, dtype=np.int64)
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != width:
            raise DataError(f"expected {width} fields, got {len(row)}", line=line)
        try:
            X[i] = [float(t) for t in row[:n_feat]]
            Y[i] = [int(t) for t in row[n_feat:-1]]
            V[i] = int(row[-1])
        except ValueError as exc:
            raise DataError(f"malformed value ({exc})", line=line) from None
        if not np.all(np.isfinite(X[i])):
            raise DataError("non-finite feature", line=line)
        if V[i] not in (0, 1):
            raise DataError(f"attribute must be 0 or 1, got {V[i]}", line=line)
        if task == "multiclass":
            if Y[i, 0] < 0 or (n_classes and Y[i, 0] >= n_classes):
                raise DataError(f"label {Y[i, 0]} out of range", line=line)
        elif not np.all(np.isin(Y[i], (0, 1))):
            raise DataError("binary label must be 0 or 1", line=line)
    labels = Y[:, 0] if task == "multiclass" else Y
    return Dataset(X, labels, V, task=task, n_classes=n_classes)
