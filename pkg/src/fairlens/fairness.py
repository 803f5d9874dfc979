"""Group fairness metrics over a binary protected attribute.

Multiclass logs are reduced one-vs-rest per class; multilabel logs are already one
binary problem per label. Every rate is a fraction; reports render them x100.

Per-class terms whose ratio is undefined (no predicted positives, or no ground-truth
positives/negatives for one group) are skipped, and the mean runs over the classes
that were evaluated. The skipped classes are listed in :func:`fairness_report`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, DomainError

CONVENTIONS = {
    "one_vs_rest": "multiclass FPR counts every record of another class as a negative",
    "undefined_terms": "per-class terms with a zero denominator are skipped; mean over evaluated classes",
    "multilabel_hard_predictions": "ensemble score >= threshold (1.0 for protected heads)",
    "average_precision": "weighted precision summed over distinct score thresholds, divided by weighted positives",
}


@dataclass
class PredictionLog:
    """True labels, hard predictions, optional scores and the attribute of each record.

    ``task="binary"`` logs are handled as two-class multiclass logs.
    """

    y_true: np.ndarray
    y_pred: np.ndarray
    attributes: np.ndarray
    task: str = "multiclass"
    n_classes: int = 0
    scores: np.ndarray | None = None

    def __post_init__(self):
        self.y_true = np.asarray(self.y_true, dtype=np.int64)
        self.y_pred = np.asarray(self.y_pred, dtype=np.int64)
        self.attributes = np.asarray(self.attributes, dtype=np.int64)
        if self.task == "binary":
            self.y_true = self.y_true.reshape(len(self.attributes))
            self.y_pred = self.y_pred.reshape(len(self.attributes))
            self.n_classes = 2
        if self.y_true.shape != self.y_pred.shape:
            raise DataError(f"y_true shape {self.y_true.shape} != y_pred shape {self.y_pred.shape}")
        if self.y_true.shape[0] != self.attributes.shape[0]:
            raise DataError("labels and attributes disagree on record count")
        if not np.all(np.isin(self.attributes, (0, 1))):
            raise DataError("attributes must be 0 or 1")
        if self.task == "multilabel":
            if self.y_true.ndim != 2:
                raise DataError("multilabel log needs 2-D labels")
            self.n_classes = self.y_true.shape[1]
        else:
            if self.y_true.ndim != 1:
                raise DataError(f"{self.task} log needs 1-D labels")
            if self.n_classes == 0 and len(self.y_true):
                self.n_classes = int(max(self.y_true.max(), self.y_pred.max())) + 1
        if self.scores is not None:
            self.scores = np.asarray(self.scores, dtype=np.float64)

    def __len__(self):
        return len(self.attributes)


@dataclass
class ConfusionSlice:
    """One-vs-rest counts, each array indexed ``[class, attribute]``."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray
    n_attr: np.ndarray

    @property
    def predicted_positive(self):
        return self.tp + self.fp

    @property
    def n_classes(self):
        return self.tp.shape[0]


def build_confusion(log):
    if len(log) == 0:
        raise DomainError("empty prediction log")
    k = log.n_classes
    if log.task == "multilabel":
        truth = log.y_true.astype(bool)
        pred = log.y_pred.astype(bool)
    else:
        classes = np.arange(k)
        truth = log.y_true[:, None] == classes
        pred = log.y_pred[:, None] == classes
    counts = {name: np.zeros((k, 2), dtype=np.int64) for name in ("tp", "fp", "fn", "tn")}
    n_attr = np.zeros(2, dtype=np.int64)
    for v in (0, 1):
        m = log.attributes == v
        n_attr[v] = int(m.sum())
        t, p = truth[m], pred[m]
        counts["tp"][:, v] = np.sum(t & p, axis=0)
        counts["fp"][:, v] = np.sum(~t & p, axis=0)
        counts["fn"][:, v] = np.sum(t & ~p, axis=0)
        counts["tn"][:, v] = np.sum(~t & ~p, axis=0)
    return ConfusionSlice(n_attr=n_attr, **counts)


def _mean(terms):
    return float(np.mean(list(terms.values()))) if terms else float("nan")


def bias_amplification_terms(cs, skew_table):
    skew = np.asarray(skew_table, dtype=np.float64)
    if skew.shape != (cs.n_classes, 2):
        raise DataError(f"skew table shape {skew.shape} != ({cs.n_classes}, 2)")
    P = cs.predicted_positive
    terms, skipped = {}, []
    for y in range(cs.n_classes):
        total = P[y].sum()
        if total == 0 or np.any(np.isnan(skew[y])):
            skipped.append(y)
            continue
        term = 0.0
        for v in (0, 1):
            if skew[y, v] > 0.5:
                term += P[y, v] / total - skew[y, v]
        terms[y] = term
    return terms, skipped


def bias_amplification(cs, skew_table):
    """Mean over classes of ``P_y^v / (P_y^0 + P_y^1) - s(y, v)`` for the training-dominant v.

    Positive values mean the model exaggerates the training skew.
    """
    return _mean(bias_amplification_terms(cs, skew_table)[0])


def bias_amplification_noniid_terms(cs):
    P = cs.predicted_positive
    terms, skipped = {}, []
    for y in range(cs.n_classes):
        total = P[y].sum()
        if total == 0:
            skipped.append(y)
            continue
        terms[y] = P[y].max() / total - 0.5
    return terms, skipped


def bias_amplification_noniid(cs):
    """Mean over classes of ``max(P_y^0, P_y^1) / (P_y^0 + P_y^1) - 0.5``, in [0, 0.5]."""
    return _mean(bias_amplification_noniid_terms(cs)[0])


def _require_groups(cs):
    if cs.n_attr[0] == 0 or cs.n_attr[1] == 0:
        raise DomainError(f"attribute group is empty (N^0={cs.n_attr[0]}, N^1={cs.n_attr[1]})")


def parity_terms(cs):
    _require_groups(cs)
    rate = cs.predicted_positive / cs.n_attr[None, :]
    return {y: float(abs(rate[y, 1] - rate[y, 0])) for y in range(cs.n_classes)}, []


def parity_difference(cs):
    """Mean absolute gap in per-class predicted-positive rate between the two groups."""
    return _mean(parity_terms(cs)[0])


def _rates(num, den):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1), np.nan)


def opportunity_terms(cs):
    _require_groups(cs)
    tpr = _rates(cs.tp, cs.tp + cs.fn)
    terms, skipped = {}, []
    for y in range(cs.n_classes):
        if np.any(np.isnan(tpr[y])):
            skipped.append(y)
        else:
            terms[y] = float(abs(tpr[y, 1] - tpr[y, 0]))
    return terms, skipped


def opportunity_difference(cs):
    """Mean absolute recall gap between the two groups."""
    return _mean(opportunity_terms(cs)[0])


def odds_terms(cs):
    _require_groups(cs)
    tpr = _rates(cs.tp, cs.tp + cs.fn)
    fpr = _rates(cs.fp, cs.fp + cs.tn)
    terms, skipped = {}, []
    for y in range(cs.n_classes):
        if np.any(np.isnan(tpr[y])) or np.any(np.isnan(fpr[y])):
            skipped.append(y)
        else:
            terms[y] = 0.5 * float(abs(fpr[y, 1] - fpr[y, 0]) + abs(tpr[y, 1] - tpr[y, 0]))
    return terms, skipped


def equalized_odds_difference(cs):
    """Mean over classes of ``0.5 * (|FPR gap| + |TPR gap|)``."""
    return _mean(odds_terms(cs)[0])


def per_class_accuracy(log):
    """Unweighted mean of within-class accuracy, in percent."""
    if log.task == "multilabel":
        raise DomainError("per-class accuracy is defined for multiclass and binary logs")
    if len(log) == 0:
        raise DomainError("empty prediction log")
    accs = []
    for y in range(log.n_classes):
        m = log.y_true == y
        if not m.any():
            raise DataError(f"class {y} is absent from the ground truth")
        accs.append(np.mean(log.y_pred[m] == y))
    return 100.0 * float(np.mean(accs))


def attribute_weights(attributes):
    """Record weight ``(N_0 + N_1) / (2 N_v)`` balancing the two attribute groups."""
    attrs = np.asarray(attributes)
    n = np.array([(attrs == 0).sum(), (attrs == 1).sum()], dtype=np.float64)
    if n.min() == 0:
        raise DomainError("both attribute groups must be present for weighted mAP")
    return (n.sum() / (2.0 * n))[attrs]


def weighted_average_precision(scores, truth, weights):
    """Weighted AP: ``sum_t (R_t - R_{t-1}) P_t`` over distinct score thresholds ``t``.

    Precision and recall at a threshold count records with ``score >= t``, each record
    contributing its weight. Without ties this is the weighted precision at every
    positive's rank, averaged with the positives' weights.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth).astype(bool)
    w = np.asarray(weights, dtype=np.float64)
    pos_total = float(w[truth].sum())
    if pos_total <= 0:
        raise DomainError("no positive records")
    order = np.argsort(-scores, kind="stable")
    s, t, w = scores[order], truth[order], w[order]
    cum_tp = np.cumsum(w * t)
    cum_all = np.cumsum(w)
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    precision = cum_tp[last] / cum_all[last]
    recall = cum_tp[last] / pos_total
    prev = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - prev) * precision))


def evaluable_labels(log):
    """Labels with both outcomes present and positives from both attribute groups."""
    out = []
    for c in range(log.n_classes):
        t = log.y_true[:, c].astype(bool)
        if t.all() or not t.any():
            continue
        if len(np.unique(log.attributes[t])) < 2:
            continue
        out.append(c)
    return out


def weighted_map(log):
    """Attribute-balanced mean average precision over evaluable labels, in percent."""
    if log.task != "multilabel" or log.scores is None:
        raise DomainError("weighted mAP needs a multilabel log with scores")
    weights = attribute_weights(log.attributes)
    labels = evaluable_labels(log)
    if not labels:
        raise DomainError("no evaluable labels for weighted mAP")
    aps = [weighted_average_precision(log.scores[:, c], log.y_true[:, c], weights) for c in labels]
    return 100.0 * float(np.mean(aps))


def fairness_report(log, skew_table=None):
    """Every metric for ``log`` plus skipped classes and conventions (JSON-ready)."""
    cs = build_confusion(log)
    metrics, skipped = {}, {}
    if log.task == "multilabel":
        if log.scores is not None:
            metrics["map"] = weighted_map(log)
    else:
        metrics["accuracy"] = per_class_accuracy(log)
    if skew_table is not None:
        terms, skip = bias_amplification_terms(cs, skew_table)
        metrics["bias_amplification"] = _mean(terms)
        skipped["bias_amplification"] = skip
    terms, skip = bias_amplification_noniid_terms(cs)
    metrics["bias_amplification_noniid"] = _mean(terms)
    skipped["bias_amplification_noniid"] = skip
    for name, fn in (("parity", parity_terms), ("opportunity", opportunity_terms), ("odds", odds_terms)):
        terms, skip = fn(cs)
        metrics[name] = _mean(terms)
        skipped[name] = skip
    return {"metrics": metrics, "skipped_classes": skipped, "conventions": dict(CONVENTIONS)}
