"""Independent reference implementations used as test oracles."""

import numpy as np

from fairlens.model import ClassifierModel, EncoderSpec, compute_loss


def finite_difference_check(model, X, labels, attrs, head_update, weight_decay, step=1e-5,
                            rel=1e-4, abs_tol=1e-6):
    """Compare analytic gradients to central differences entry by entry.

    Returns ``(n_checked, worst)`` where ``worst`` is the largest excess of the error over
    the tolerance ``abs_tol + rel * |numeric|``; the check passes when ``worst <= 0``.
    """
    _, grads = compute_loss(model, X, labels, attrs, head_update, weight_decay)
    worst = -np.inf
    checked = 0
    for key, p in model.params.items():
        flat = p.reshape(-1)
        g = grads[key].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp, _ = compute_loss(model, X, labels, attrs, head_update, weight_decay)
            flat[i] = orig - step
            lm, _ = compute_loss(model, X, labels, attrs, head_update, weight_decay)
            flat[i] = orig
            num = (lp - lm) / (2 * step)
            worst = max(worst, abs(num - g[i]) - (abs_tol + rel * abs(num)))
            checked += 1
    return checked, worst


LOSS_CASES = {
    "baseline": ("baseline", "multiclass", 3),
    "protected-multiclass": ("protected", "multiclass", 3),
    "protected-multilabel": ("protected", "multilabel", 3),
    "protected-binary": ("protected", "binary", 1),
}


def random_instance(case, seed):
    """A small random (model, batch) pair for one of :data:`LOSS_CASES`."""
    variant, task, n_out = LOSS_CASES[case]
    rng = np.random.default_rng(seed)
    d = int(rng.integers(3, 6))
    widths = (d, int(rng.integers(3, 7)), int(rng.integers(2, 5)))
    model = ClassifierModel.create(
        EncoderSpec(widths), variant, task, n_out, embed_dim=int(rng.integers(3, 6)),
        temperature=float(rng.uniform(0.3, 1.0)), seed=seed,
    )
    for p in model.params.values():
        p += 0.1 * rng.normal(size=p.shape)
    n = int(rng.integers(4, 9))
    X = rng.normal(size=(n, d))
    attrs = rng.integers(0, 2, n)
    if task == "multiclass":
        labels = rng.integers(0, n_out, n)
    else:
        labels = rng.integers(0, 2, (n, n_out))
    head_update = "both" if task == "binary" or seed % 2 else "matched"
    return model, X, labels, attrs, head_update


# ---------------------------------------------------------------------------
# per-record recounts of the fairness metrics


def recount(y_true, y_pred, attrs, k):
    """Counts ``tp, fp, fn, tn`` indexed [class][v] and group sizes, one record at a time."""
    tab = {name: [[0, 0] for _ in range(k)] for name in ("tp", "fp", "fn", "tn")}
    n_attr = [0, 0]
    for t, p, v in zip(y_true, y_pred, attrs):
        n_attr[v] += 1
        for c in range(k):
            truth, pred = t == c, p == c
            key = ("tp" if truth else "fp") if pred else ("fn" if truth else "tn")
            tab[key][c][v] += 1
    return tab, n_attr


def naive_metrics(y_true, y_pred, attrs, k, skew):
    tab, n_attr = recount(y_true, y_pred, attrs, k)
    out = {}
    terms = []
    for c in range(k):
        pos = [tab["tp"][c][v] + tab["fp"][c][v] for v in (0, 1)]
        if sum(pos) == 0:
            continue
        terms.append(sum(pos[v] / sum(pos) - skew[c][v] for v in (0, 1) if skew[c][v] > 0.5))
    out["bias_amplification"] = float(np.mean(terms)) if terms else float("nan")
    terms = []
    for c in range(k):
        pos = [tab["tp"][c][v] + tab["fp"][c][v] for v in (0, 1)]
        if sum(pos):
            terms.append(max(pos) / sum(pos) - 0.5)
    out["bias_amplification_noniid"] = float(np.mean(terms)) if terms else float("nan")
    if min(n_attr) == 0:
        return out
    out["parity"] = float(np.mean([
        abs((tab["tp"][c][1] + tab["fp"][c][1]) / n_attr[1] - (tab["tp"][c][0] + tab["fp"][c][0]) / n_attr[0])
        for c in range(k)
    ]))
    opp, odds = [], []
    for c in range(k):
        tpr, fpr = [], []
        for v in (0, 1):
            p = tab["tp"][c][v] + tab["fn"][c][v]
            q = tab["fp"][c][v] + tab["tn"][c][v]
            tpr.append(tab["tp"][c][v] / p if p else None)
            fpr.append(tab["fp"][c][v] / q if q else None)
        if None not in tpr:
            opp.append(abs(tpr[1] - tpr[0]))
            if None not in fpr:
                odds.append(0.5 * (abs(fpr[1] - fpr[0]) + abs(tpr[1] - tpr[0])))
    out["opportunity"] = float(np.mean(opp)) if opp else float("nan")
    out["odds"] = float(np.mean(odds)) if odds else float("nan")
    return out


def naive_per_class_accuracy(y_true, y_pred, k):
    accs = []
    for c in range(k):
        idx = [i for i, t in enumerate(y_true) if t == c]
        accs.append(sum(y_pred[i] == c for i in idx) / len(idx))
    return 100.0 * sum(accs) / k


# ---------------------------------------------------------------------------
# weighted average precision


def exhaustive_weighted_ap(scores, truth, weights):
    """Walk every distinct threshold from high to low and sum recall gain x precision.

    At each threshold ``t`` all records with ``score >= t`` are retrieved; precision and
    recall are recomputed from scratch by masking, with no running sums.
    """
    scores = [float(s) for s in scores]
    pos_total = sum(w for w, t in zip(weights, truth) if t)
    ap, prev_recall = 0.0, 0.0
    for t in sorted(set(scores), reverse=True):
        kept = [i for i, s in enumerate(scores) if s >= t]
        tp = sum(weights[i] for i in kept if truth[i])
        allw = sum(weights[i] for i in kept)
        recall = tp / pos_total
        ap += (recall - prev_recall) * (tp / allw)
        prev_recall = recall
    return ap


def rank_weighted_ap(scores, truth, weights):
    """Tie-free form: weighted precision at each positive's rank, averaged by positive weight."""
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    pos_total = sum(w for w, t in zip(weights, truth) if t)
    total, tp_w, all_w = 0.0, 0.0, 0.0
    for i in order:
        all_w += weights[i]
        if truth[i]:
            tp_w += weights[i]
            total += weights[i] * tp_w / all_w
    return total / pos_total
