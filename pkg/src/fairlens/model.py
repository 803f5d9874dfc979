"""MLP classifier with a one-hot baseline head or protected cosine-softmax heads.

Layout of ``ClassifierModel.params`` (all float64 arrays):

* ``enc.{l}.W`` (out, in), ``enc.{l}.b`` (out,) -- encoder layers, ReLU between them,
  identity after the last one. The last width is the feature size ``H``.
* baseline: ``head.W`` (n_outputs, H), ``head.b`` (n_outputs,).
* protected: ``proj.{v}.W`` (M, H), ``proj.{v}.b`` (M,) for v in {0, 1}, and class
  weights ``cls.{v}`` of shape (K, M) for multiclass or (C, 2, M) for multilabel
  and binary (rows: absence, presence).

With ``tied=True`` both attribute values share the head-0 parameters; this is the
single-head ablation where both attribute losses land in one embedding space.

Gradients are computed by hand; ``tests/test_model.py`` checks them against
central finite differences.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bias import remove_bias
from .exceptions import (
    ConfigError,
    DataError,
    DomainError,
    NumericError,
    ShapeError,
    TrainingDiverged,
    UnsupportedOperation,
)
from .numeric import SeededRNG

VARIANTS = ("baseline", "protected")
TASKS = ("multiclass", "multilabel", "binary")
SCHEDULES = ("step", "exponential", "constant")
HEAD_UPDATES = ("matched", "both")
COS_EPS = 1e-12
CHECKPOINT_FORMAT = "fairlens-checkpoint"


@dataclass(frozen=True)
class EncoderSpec:
    """Layer widths from input to feature dimension, e.g. ``(32, 64, 64, 32)``."""

    widths: tuple

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2:
            raise ConfigError("encoder needs at least one layer (two widths)", "/encoder/widths")
        if any(w < 1 for w in widths):
            raise ConfigError("all widths must be >= 1", "/encoder/widths")
        object.__setattr__(self, "widths", widths)

    @property
    def input_dim(self):
        return self.widths[0]

    @property
    def feature_dim(self):
        return self.widths[-1]

    @property
    def n_layers(self):
        return len(self.widths) - 1


@dataclass
class TrainConfig:
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 128
    epochs: int = 60
    schedule: str = "step"
    step_factor: float = 0.1
    step_period: int = 20
    exp_decay: float = 0.999
    temperature: float = 0.1
    head_update: str = "matched"
    seed: int = 0

    def validate(self):
        if not self.lr > 0:
            raise ConfigError("lr must be > 0", "/lr")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)", "/momentum")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0", "/weight_decay")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", "/batch_size")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0", "/epochs")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"schedule must be one of {SCHEDULES}", "/schedule")
        if self.step_period < 1:
            raise ConfigError("step_period must be >= 1", "/step_period")
        if not 0 < self.exp_decay <= 1:
            raise ConfigError("exp_decay must lie in (0, 1]", "/exp_decay")
        if not self.temperature > 0:
            raise ConfigError("temperature must be > 0", "/temperature")
        if self.head_update not in HEAD_UPDATES:
            raise ConfigError(f"head_update must be one of {HEAD_UPDATES}", "/head_update")
        return self

    @classmethod
    def from_dict(cls, d, pointer=""):
        names = {f.name for f in dataclasses.fields(cls)}
        for key in d:
            if key not in names:
                raise ConfigError(f"unknown field '{key}'", f"{pointer}/{key}")
        try:
            return cls(**d).validate()
        except ConfigError as exc:
            raise ConfigError(exc.message, pointer + exc.pointer) from None

    def to_dict(self):
        return dataclasses.asdict(self)


def learning_rate(cfg, epoch, step):
    """Learning rate at ``epoch`` (0-based) after ``step`` optimizer steps."""
    if cfg.schedule == "step":
        return cfg.lr * cfg.step_factor ** (epoch // cfg.step_period)
    if cfg.schedule == "exponential":
        return cfg.lr * cfg.exp_decay**step
    return cfg.lr


def _glorot(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(shape, -limit, limit)


@dataclass
class ClassifierModel:
    encoder: EncoderSpec
    variant: str
    task: str
    n_outputs: int
    embed_dim: int = 128
    temperature: float = 0.1
    tied: bool = False
    params: dict = field(default_factory=dict, repr=False)
    velocity: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}", "/variant")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}", "/task")
        if self.task == "binary" and self.n_outputs != 1:
            raise ConfigError("binary task has exactly one output label", "/n_outputs")
        if self.n_outputs < 1:
            raise ConfigError("n_outputs must be >= 1", "/n_outputs")
        if self.tied and self.variant != "protected":
            raise ConfigError("head tying only applies to the protected variant", "/tied")

    @classmethod
    def create(cls, encoder, variant, task, n_outputs, embed_dim=128, temperature=0.1,
               seed=0, tied=False):
        """Build a model with Glorot-uniform weights and zero biases."""
        model = cls(encoder, variant, task, n_outputs, embed_dim, temperature, tied)
        rng = SeededRNG(seed).child(101)
        p = {}
        w = encoder.widths
        for layer in range(encoder.n_layers):
            p[f"enc.{layer}.W"] = _glorot(rng, (w[layer + 1], w[layer]), w[layer], w[layer + 1])
            p[f"enc.{layer}.b"] = np.zeros(w[layer + 1])
        h = encoder.feature_dim
        if variant == "baseline":
            p["head.W"] = _glorot(rng, (n_outputs, h), h, n_outputs)
            p["head.b"] = np.zeros(n_outputs)
        else:
            m = embed_dim
            for v in (0,) if tied else (0, 1):
                p[f"proj.{v}.W"] = _glorot(rng, (m, h), h, m)
                p[f"proj.{v}.b"] = np.zeros(m)
                if task == "multiclass":
                    p[f"cls.{v}"] = _glorot(rng, (n_outputs, m), m, n_outputs)
                else:
                    p[f"cls.{v}"] = _glorot(rng, (n_outputs, 2, m), m, 2)
        model.params = p
        model.velocity = {k: np.zeros_like(a) for k, a in p.items()}
        return model

    @property
    def multilabel_head(self):
        return self.task in ("multilabel", "binary")

    def head_keys(self, v):
        k = 0 if self.tied else v
        return f"proj.{k}.W", f"proj.{k}.b", f"cls.{k}"

    def copy(self):
        return copy.deepcopy(self)


# ---------------------------------------------------------------------------
# forward pieces


def _check_input(model, X):
    X = np.asarray(X, dtype=np.float64)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.encoder.input_dim:
        raise ShapeError(
            f"expected inputs of dimension {model.encoder.input_dim}, got shape {X.shape}"
        )
    return X, squeeze


def _encode(model, X):
    acts = [X]
    a = X
    n = model.encoder.n_layers
    for layer in range(n):
        a = a @ model.params[f"enc.{layer}.W"].T + model.params[f"enc.{layer}.b"]
        if layer < n - 1:
            a = np.maximum(a, 0.0)
        acts.append(a)
    return a, acts


def _encode_backward(model, acts, dh, grads):
    n = model.encoder.n_layers
    d = dh
    for layer in reversed(range(n)):
        if layer < n - 1:
            d = d * (acts[layer + 1] > 0)
        grads[f"enc.{layer}.W"] += d.T @ acts[layer]
        grads[f"enc.{layer}.b"] += d.sum(axis=0)
        if layer > 0:
            d = d @ model.params[f"enc.{layer}.W"]


def forward_features(model, x):
    """Encoder output ``h = f(x)`` for one sample (1-D) or a batch (2-D)."""
    X, squeeze = _check_input(model, x)
    h, _ = _encode(model, X)
    return h[0] if squeeze else h


def _require_protected(model, what):
    if model.variant != "protected":
        raise UnsupportedOperation(f"{what} needs the protected variant, model is '{model.variant}'")


def project(model, h, v):
    """Embedding ``z = g^v(h)`` using only the parameters of head ``v``."""
    _require_protected(model, "project")
    if v not in (0, 1):
        raise DomainError(f"attribute must be 0 or 1, got {v}")
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != model.encoder.feature_dim:
        raise ShapeError(f"feature dimension {h.shape[-1]} != {model.encoder.feature_dim}")
    kw, kb, _ = model.head_keys(v)
    return h @ model.params[kw].T + model.params[kb]


def _cosine_matrix(W, Z, eps):
    nw = np.linalg.norm(W, axis=1)
    nz = np.linalg.norm(Z, axis=1)
    A = 1.0 / np.outer(nz + eps, nw + eps)
    S = (Z @ W.T) * A
    return S, (nw, nz, A)


def _cosine_backward(G, W, Z, S, cache, eps):
    nw, nz, A = cache
    GA = G * A
    with np.errstate(invalid="ignore", divide="ignore"):
        rz = np.where(nz > 0, (G * S).sum(axis=1) / ((nz + eps) * nz), 0.0)
        rw = np.where(nw > 0, (G * S).sum(axis=0) / ((nw + eps) * nw), 0.0)
    dZ = GA @ W - rz[:, None] * Z
    dW = GA.T @ Z - rw[:, None] * W
    return dW, dZ


def _strict_cosine(W, Z):
    nw = np.linalg.norm(W, axis=-1)
    nz = np.linalg.norm(Z, axis=-1)
    if np.any(nw == 0):
        raise DomainError("class weight row has zero norm")
    if np.any(nz == 0):
        raise DomainError("embedding has zero norm")
    return (Z / nz[..., None]) @ (W / nw[..., None]).T


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def probs_multiclass(model, z, v):
    """``p(y | z, v)``: softmax over cosine similarities to the rows of ``cls.v``, divided by tau."""
    _require_protected(model, "probs_multiclass")
    if model.task != "multiclass":
        raise UnsupportedOperation("probs_multiclass needs a multiclass model")
    _, _, kc = model.head_keys(v)
    z = np.asarray(z, dtype=np.float64)
    return _softmax(_strict_cosine(model.params[kc], z) / model.temperature)


def probs_multilabel(model, z, v, c):
    """Two-way distribution (absence, presence) of attribute label ``c`` from head ``v``."""
    _require_protected(model, "probs_multilabel")
    if not model.multilabel_head:
        raise UnsupportedOperation("probs_multilabel needs a multilabel or binary model")
    if not 0 <= c < model.n_outputs:
        raise DomainError(f"label index {c} out of range")
    _, _, kc = model.head_keys(v)
    z = np.asarray(z, dtype=np.float64)
    return _softmax(_strict_cosine(model.params[kc][c], z) / model.temperature)


# ---------------------------------------------------------------------------
# losses


def _finite_or_raise(model, what, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            bad = {
                k: float(np.max(np.abs(p))) if np.all(np.isfinite(p)) else "non-finite"
                for k, p in model.params.items()
            }
            raise NumericError(f"non-finite values in {what}; max |param| per tensor: {bad}")


def _decay(model, lam, grads):
    if lam == 0:
        return 0.0
    total = 0.0
    for k, p in model.params.items():
        total += float(np.sum(p * p))
        grads[k] += lam * p
    return 0.5 * lam * total


def _head_weights(attributes, head_update):
    attributes = np.asarray(attributes, dtype=np.int64)
    if head_update == "both":
        return np.full((len(attributes), 2), 0.5)
    w = np.zeros((len(attributes), 2))
    w[np.arange(len(attributes)), attributes] = 1.0
    return w


def loss_multiclass(model, X, y, attributes, head_update="matched", weight_decay=0.0):
    """Protected cosine-softmax loss. Returns ``(loss, grads)``.

    ``matched`` routes every sample through its own attribute's head; ``both`` sends it
    through both heads with weight 0.5 each.
    """
    _require_protected(model, "loss_multiclass")
    if model.task != "multiclass":
        raise UnsupportedOperation("loss_multiclass needs a multiclass model")
    return _protected_loss(model, X, np.asarray(y)[:, None], attributes, head_update, weight_decay)


def loss_multilabel(model, X, Y, attributes, head_update="matched", weight_decay=0.0):
    """Protected loss averaged over samples and labels; binary is the ``C = 1`` case."""
    _require_protected(model, "loss_multilabel")
    if not model.multilabel_head:
        raise UnsupportedOperation("loss_multilabel needs a multilabel or binary model")
    Y = np.asarray(Y)
    if Y.ndim == 1:
        Y = Y[:, None]
    return _protected_loss(model, X, Y, attributes, head_update, weight_decay)


def _protected_loss(model, X, Y, attributes, head_update, weight_decay):
    X, _ = _check_input(model, X)
    n = X.shape[0]
    if n == 0:
        raise DomainError("empty batch")
    Y = np.asarray(Y, dtype=np.int64)
    tau = model.temperature
    grads = {k: np.zeros_like(p) for k, p in model.params.items()}
    h, acts = _encode(model, X)
    dh = np.zeros_like(h)
    omega = _head_weights(attributes, head_update)
    multiclass = model.task == "multiclass"
    n_terms = n if multiclass else n * Y.shape[1]
    total = 0.0
    for v in (0, 1):
        rows = np.flatnonzero(omega[:, v] > 0)
        if rows.size == 0:
            continue
        kw, kb, kc = model.head_keys(v)
        hv = h[rows]
        Z = hv @ model.params[kw].T + model.params[kb]
        W = model.params[kc]
        if multiclass:
            Wf = W
        else:
            Wf = W.reshape(-1, W.shape[-1])
        S, cache = _cosine_matrix(Wf, Z, COS_EPS)
        _finite_or_raise(model, "forward pass", S)
        wv = omega[rows, v]
        if multiclass:
            logits = S / tau
            logp = _log_softmax(logits)
            yv = Y[rows, 0]
            ce = -logp[np.arange(rows.size), yv]
            total += float(np.sum(wv * ce))
            dlog = np.exp(logp)
            dlog[np.arange(rows.size), yv] -= 1.0
            dS = dlog * (wv[:, None] / (n_terms * tau))
        else:
            c = W.shape[0]
            logits = S.reshape(rows.size, c, 2) / tau
            logp = _log_softmax(logits)
            yv = Y[rows]
            picked = np.take_along_axis(logp, yv[:, :, None], axis=2)[:, :, 0]
            total += float(np.sum(wv[:, None] * -picked))
            dlog = np.exp(logp) - (yv[:, :, None] == np.arange(2))
            dS = (dlog * (wv[:, None, None] / (n_terms * tau))).reshape(rows.size, -1)
        dWf, dZ = _cosine_backward(dS, Wf, Z, S, cache, COS_EPS)
        grads[kc] += dWf.reshape(W.shape)
        grads[kw] += dZ.T @ hv
        grads[kb] += dZ.sum(axis=0)
        dh[rows] += dZ @ model.params[kw]
    _encode_backward(model, acts, dh, grads)
    loss = total / n_terms + _decay(model, weight_decay, grads)
    _finite_or_raise(model, "loss", np.array(loss))
    return loss, grads


def loss_baseline(model, X, y, weight_decay=0.0):
    """Attribute-blind loss: softmax cross-entropy (multiclass) or per-label sigmoid BCE."""
    if model.variant != "baseline":
        raise UnsupportedOperation("loss_baseline needs the baseline variant")
    X, _ = _check_input(model, X)
    n = X.shape[0]
    if n == 0:
        raise DomainError("empty batch")
    grads = {k: np.zeros_like(p) for k, p in model.params.items()}
    h, acts = _encode(model, X)
    logits = h @ model.params["head.W"].T + model.params["head.b"]
    _finite_or_raise(model, "forward pass", logits)
    y = np.asarray(y, dtype=np.int64)
    if model.task == "multiclass":
        logp = _log_softmax(logits)
        total = -float(np.sum(logp[np.arange(n), y])) / n
        dlog = np.exp(logp)
        dlog[np.arange(n), y] -= 1.0
        dlog /= n
    else:
        Y = y[:, None] if y.ndim == 1 else y
        m = Y.size
        # softplus(l) - y*l, written to stay finite for large |l|
        total = float(np.sum(np.logaddexp(0.0, logits) - Y * logits)) / m
        dlog = (_sigmoid(logits) - Y) / m
    grads["head.W"] += dlog.T @ h
    grads["head.b"] += dlog.sum(axis=0)
    _encode_backward(model, acts, dlog @ model.params["head.W"], grads)
    loss = total + _decay(model, weight_decay, grads)
    _finite_or_raise(model, "loss", np.array(loss))
    return loss, grads


def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def compute_loss(model, X, labels, attributes, head_update="matched", weight_decay=0.0):
    """Dispatch to the loss matching the model's variant and task."""
    if model.variant == "baseline":
        return loss_baseline(model, X, labels, weight_decay)
    if model.task == "multiclass":
        return loss_multiclass(model, X, labels, attributes, head_update, weight_decay)
    return loss_multilabel(model, X, labels, attributes, head_update, weight_decay)


# ---------------------------------------------------------------------------
# optimisation


def sgd_step(model, grads, cfg, epoch=0, step=0):
    """Momentum SGD: ``buf = momentum * buf + g``; ``theta -= lr * buf``."""
    lr = learning_rate(cfg, epoch, step)
    for k, p in model.params.items():
        buf = model.velocity.get(k)
        if buf is None:
            buf = model.velocity[k] = np.zeros_like(p)
        buf *= cfg.momentum
        buf += grads[k]
        p -= lr * buf
    return model


def _train_labels(ds):
    if ds.task == "multiclass":
        return ds.labels
    return ds.labels if ds.labels.ndim == 2 else ds.labels[:, None]


def _check_compatible(model, ds):
    if ds.feature_dim != model.encoder.input_dim:
        raise ShapeError(f"dataset dimension {ds.feature_dim} != encoder input {model.encoder.input_dim}")
    if ds.task != model.task:
        raise ConfigError(f"dataset task '{ds.task}' does not match model task '{model.task}'", "/task")
    if model.task == "multiclass" and ds.n_classes > model.n_outputs:
        raise ShapeError(f"dataset has {ds.n_classes} classes, model {model.n_outputs}")
    if model.task != "multiclass" and ds.n_labels != model.n_outputs:
        raise ShapeError(f"dataset has {ds.n_labels} labels, model {model.n_outputs}")


def evaluate_metric(model, ds):
    """Accuracy (multiclass, binary) or weighted mAP (multilabel), in percent."""
    from . import fairness

    if model.task == "multilabel":
        log = fairness.PredictionLog(
            ds.labels, predict_labels(model, ds.features), ds.attributes,
            task="multilabel", scores=predict_scores(model, ds.features),
        )
        return fairness.weighted_map(log)
    pred = predict(model, ds.features)
    truth = ds.class_labels
    return 100.0 * float(np.mean(pred == truth))


def train(model, train_ds, val_ds, cfg):
    """Train a copy of ``model``; returns ``(trained_model, history)``.

    Samples are shuffled once per epoch from a stream derived from ``cfg.seed``. For
    multilabel tasks the epoch with the best validation weighted mAP is returned,
    otherwise the final epoch.
    """
    cfg.validate()
    _check_compatible(model, train_ds)
    if val_ds is not None:
        _check_compatible(model, val_ds)
    model = model.copy()
    model.temperature = cfg.temperature
    X = train_ds.features
    labels = _train_labels(train_ds)
    attrs = train_ds.attributes
    n = len(train_ds)
    rng = SeededRNG(cfg.seed).child(202)
    history = []
    select_best = model.task == "multilabel" and val_ds is not None
    best = (-math.inf, None)
    step = 0
    # overflow surfaces through the finiteness checks below, not as warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            lr = learning_rate(cfg, epoch, step)
            running = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                try:
                    loss, grads = compute_loss(
                        model, X[idx], labels[idx], attrs[idx], cfg.head_update, cfg.weight_decay
                    )
                except NumericError as exc:
                    raise TrainingDiverged(f"epoch {epoch}: {exc}", history) from exc
                sgd_step(model, grads, cfg, epoch, step)
                step += 1
                running += loss * len(idx)
            record = {"epoch": epoch, "lr": lr, "loss": running / n}
            finite_params = all(np.all(np.isfinite(p)) for p in model.params.values())
            if not math.isfinite(record["loss"]) or not finite_params:
                history.append(record)
                raise TrainingDiverged(f"epoch {epoch}: loss or parameters became non-finite", history)
            record["train_metric"] = evaluate_metric(model, train_ds)
            if val_ds is not None:
                record["val_metric"] = evaluate_metric(model, val_ds)
                if select_best and record["val_metric"] > best[0]:
                    best = (record["val_metric"], model.copy())
            history.append(record)
    if select_best and best[1] is not None:
        model = best[1]
    return model, history


# ---------------------------------------------------------------------------
# inference (features only: attribute labels are never an input here)


def _features(model, X, bias_direction):
    X, _ = _check_input(model, X)
    h, _ = _encode(model, X)
    if bias_direction is not None:
        h = remove_bias(h, bias_direction)
    return h


def head_probabilities(model, X, bias_direction=None):
    """Per-head probabilities, shape (2, N, K) or (2, N, C, 2)."""
    _require_protected(model, "head_probabilities")
    h = _features(model, X, bias_direction)
    out = []
    for v in (0, 1):
        z = project(model, h, v)
        _, _, kc = model.head_keys(v)
        W = model.params[kc]
        if model.task == "multiclass":
            out.append(_softmax(_cosine_matrix(W, z, COS_EPS)[0] / model.temperature))
        else:
            S = _cosine_matrix(W.reshape(-1, W.shape[-1]), z, COS_EPS)[0]
            out.append(_softmax(S.reshape(len(z), W.shape[0], 2) / model.temperature))
    return np.stack(out)


def ensemble_argmax(distributions):
    """Argmax of the summed distributions; ties go to the lowest index."""
    total = np.sum(np.asarray(distributions, dtype=np.float64), axis=0)
    return np.argmax(total, axis=-1)


def ensemble_predict_multiclass(model, X, bias_direction=None):
    _require_protected(model, "ensemble_predict_multiclass")
    if model.task != "multiclass":
        raise UnsupportedOperation("ensemble_predict_multiclass needs a multiclass model")
    return ensemble_argmax(head_probabilities(model, X, bias_direction))


def ensemble_score_multilabel(model, X, bias_direction=None):
    """Sum over heads of ``p(label present)``; each score lies in [0, 2]."""
    _require_protected(model, "ensemble_score_multilabel")
    if not model.multilabel_head:
        raise UnsupportedOperation("ensemble_score_multilabel needs a multilabel or binary model")
    return head_probabilities(model, X, bias_direction)[..., 1].sum(axis=0)


def predict_scores(model, X, bias_direction=None):
    """Continuous scores: ensemble sum for protected models, sigmoid for the baseline."""
    if model.variant == "protected":
        if model.task == "multiclass":
            return head_probabilities(model, X, bias_direction).sum(axis=0)
        return ensemble_score_multilabel(model, X, bias_direction)
    h = _features(model, X, bias_direction)
    logits = h @ model.params["head.W"].T + model.params["head.b"]
    if model.task == "multiclass":
        return _softmax(logits)
    return _sigmoid(logits)


def default_threshold(model):
    return 1.0 if model.variant == "protected" else 0.5


def predict_labels(model, X, bias_direction=None, threshold=None):
    """Hard multilabel/binary predictions: score >= threshold."""
    if model.task == "multiclass":
        raise UnsupportedOperation("predict_labels is for multilabel or binary models")
    t = default_threshold(model) if threshold is None else threshold
    return (predict_scores(model, X, bias_direction) >= t).astype(np.int64)


def predict(model, X, bias_direction=None, threshold=None):
    """Class index per sample (multiclass, binary) or label matrix (multilabel)."""
    if model.task == "multiclass":
        if model.variant == "protected":
            return ensemble_predict_multiclass(model, X, bias_direction)
        return np.argmax(predict_scores(model, X, bias_direction), axis=-1)
    labels = predict_labels(model, X, bias_direction, threshold)
    return labels[:, 0] if model.task == "binary" else labels


# ---------------------------------------------------------------------------
# checkpoints


def _to_nested(a):
    return a.tolist()


def save_checkpoint(model, path):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "variant": model.variant,
        "task": model.task,
        "encoder": list(model.encoder.widths),
        "n_outputs": model.n_outputs,
        "embed_dim": model.embed_dim,
        "temperature": model.temperature,
        "tied": model.tied,
        "params": {k: _to_nested(p) for k, p in model.params.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def checkpoint_bytes(model):
    """Canonical serialisation, handy for comparing models."""
    return json.dumps({k: _to_nested(p) for k, p in model.params.items()}).encode()


def load_checkpoint(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"checkpoint parse error: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise DataError("field 'format': not a fairlens checkpoint")
    for key in ("variant", "task", "encoder", "n_outputs", "embed_dim", "temperature", "params"):
        if key not in doc:
            raise DataError(f"field '{key}' missing from checkpoint")
    try:
        model = ClassifierModel.create(
            EncoderSpec(tuple(doc["encoder"])), doc["variant"], doc["task"], int(doc["n_outputs"]),
            embed_dim=int(doc["embed_dim"]), temperature=float(doc["temperature"]),
            tied=bool(doc.get("tied", False)),
        )
    except ConfigError as exc:
        raise DataError(f"field '{exc.pointer.strip('/')}': {exc.message}") from None
    stored = doc["params"]
    for key, ref in model.params.items():
        if key not in stored:
            raise DataError(f"field 'params.{key}' missing from checkpoint")
        try:
            arr = np.asarray(stored[key], dtype=np.float64)
        except (TypeError, ValueError):
            raise ShapeError(f"field 'params.{key}': ragged or non-numeric tensor") from None
        if arr.shape != ref.shape:
            raise ShapeError(f"field 'params.{key}': expected shape {ref.shape}, got {arr.shape}")
        model.params[key] = arr
    extra = set(stored) - set(model.params)
    if extra:
        raise DataError(f"field 'params': unexpected tensors {sorted(extra)}")
    model.velocity = {k: np.zeros_like(a) for k, a in model.params.items()}
    return model
