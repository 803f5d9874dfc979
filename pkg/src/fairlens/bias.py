"""Bias direction in feature space: prototypes, their differences, PCA, removal.

For every class ``y`` and attribute value ``v`` the prototype ``mu[y, v]`` is the mean
feature vector of that cell. The rows ``delta[y] = mu[y, 1] - mu[y, 0]`` are analysed
with PCA; a dominant first component is the bias direction ``b``, and projecting it
out of the features neutralises it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DataError, DomainError, ShapeError
from .numeric import SeededRNG, sample_skewness, symmetric_eigen

DEGENERATE_VARIANCE = 1e-18


def compute_prototypes(features, labels, attributes, n_rows=None):
    """Mean feature per (class, attribute) cell, shape ``(K, 2, H)``.

    ``labels`` is a class index vector, or an ``(N, C)`` binary matrix in which case
    row ``c`` averages the positives of label ``c``.
    """
    H = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    attrs = np.asarray(attributes)
    if H.ndim != 2 or H.shape[0] != len(attrs) or labels.shape[0] != len(attrs):
        raise ShapeError("features, labels and attributes disagree on sample count")
    if labels.ndim == 1:
        k = int(labels.max()) + 1 if n_rows is None else n_rows
        member = labels[:, None] == np.arange(k)[None, :]
    else:
        member = labels.astype(bool)
        k = member.shape[1]
    protos = np.empty((k, 2, H.shape[1]))
    for y in range(k):
        for v in (0, 1):
            mask = member[:, y] & (attrs == v)
            count = int(mask.sum())
            if count == 0:
                raise DataError(f"empty cell (y={y}, v={v}): cannot form a prototype")
            protos[y, v] = H[mask].mean(axis=0)
    return protos


def compute_delta(prototypes):
    """``delta[y] = mu[y, 1] - mu[y, 0]``, ordered by class index."""
    protos = np.asarray(prototypes, dtype=np.float64)
    if protos.ndim != 3 or protos.shape[1] != 2:
        raise ShapeError(f"prototypes must have shape (K, 2, H), got {protos.shape}")
    return protos[:, 1] - protos[:, 0]


@dataclass(frozen=True)
class Spectrum:
    """Explained-variance ratios (descending), their skewness, unit components as rows."""

    ratios: np.ndarray
    skewness: float
    components: np.ndarray


def spectrum(delta, centered=True):
    """PCA of the rows of ``delta`` through their Gram matrix.

    The ratio list has ``min(rank cap, H)`` entries where the cap is ``K - 1`` when
    centred and ``K`` otherwise; trailing zero eigenvalues stay in the list. The
    skewness is g1 of that list, NaN when it has fewer than three entries and 0 when
    every ratio is equal.
    """
    D = np.asarray(delta, dtype=np.float64)
    if D.ndim != 2:
        raise ShapeError(f"delta must be 2-D, got shape {D.shape}")
    k, dim = D.shape
    if centered:
        if k < 2:
            raise DomainError("centred spectrum needs at least 2 rows")
        D = D - D.mean(axis=0)
    elif k < 1:
        raise DomainError("spectrum needs at least 1 row")
    gram = D @ D.T
    total = float(np.trace(gram))
    if total < DEGENERATE_VARIANCE:
        raise DomainError(f"degenerate spectrum: total variance {total:.3e}")
    eig = symmetric_eigen(gram)
    cap = min(k - 1 if centered else k, dim)
    values = np.clip(eig.eigenvalues[:cap], 0.0, None)
    ratios = values / values.sum()
    comps = []
    for i in range(cap):
        if values[i] > 1e-12 * values[0]:
            c = D.T @ eig.eigenvectors[:, i]
            comps.append(c / np.linalg.norm(c))
        else:
            comps.append(np.zeros(dim))
    if len(ratios) < 3:
        skew = float("nan")
    elif np.ptp(ratios) <= 1e-12:
        skew = 0.0
    else:
        skew = sample_skewness(ratios)
    return Spectrum(ratios, skew, np.asarray(comps))


def _orient(b, delta):
    """Sign convention: ``b . mean(delta) >= 0``; on a tie the first nonzero entry is positive."""
    mean = np.asarray(delta).mean(axis=0)
    dot = float(b @ mean)
    if abs(dot) > 1e-12 * max(1.0, float(np.linalg.norm(mean))):
        return b if dot > 0 else -b
    nz = np.flatnonzero(np.abs(b) > 1e-15)
    if nz.size and b[nz[0]] < 0:
        return -b
    return b


def bias_direction(delta, centered=True):
    """First principal component of ``delta`` as a unit vector, sign-normalised."""
    spec = spectrum(delta, centered)
    return _orient(spec.components[0], delta)


def remove_bias(h, b):
    """Project ``b`` out of each feature row: ``h - (h . b_hat) b_hat``."""
    b = np.asarray(b, dtype=np.float64)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        raise DomainError("bias direction has zero norm")
    u = b / nb
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != u.shape[0]:
        raise ShapeError(f"feature dimension {h.shape[-1]} != direction dimension {u.shape[0]}")
    return h - (h @ u)[..., None] * u


def mitigated_embed(model, h, b, v):
    """Embedding of the debiased features through head ``v``."""
    from .model import project

    return project(model, remove_bias(h, b), v)


@dataclass
class BiasProfile:
    prototypes: np.ndarray
    delta: np.ndarray
    ratios: np.ndarray
    skewness: float
    direction: np.ndarray
    centered: bool
    source: str = "train"

    @property
    def pc1_ratio(self):
        return float(self.ratios[0])

    def to_dict(self):
        return {
            "prototypes": self.prototypes.tolist(),
            "delta": self.delta.tolist(),
            "ratios": self.ratios.tolist(),
            "skewness": None if np.isnan(self.skewness) else self.skewness,
            "pc1_ratio": self.pc1_ratio,
            "bias_direction": self.direction.tolist(),
            "centered": self.centered,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                prototypes=np.asarray(d["prototypes"], dtype=np.float64),
                delta=np.asarray(d["delta"], dtype=np.float64),
                ratios=np.asarray(d["ratios"], dtype=np.float64),
                skewness=float("nan") if d["skewness"] is None else float(d["skewness"]),
                direction=np.asarray(d["bias_direction"], dtype=np.float64),
                centered=bool(d["centered"]),
                source=d.get("source", "train"),
            )
        except KeyError as exc:
            raise DataError(f"bias profile missing field {exc}") from None

    def plot_payload(self):
        """Prototypes and deltas projected on the top two components (2-D scatter data)."""
        comps = spectrum(self.delta, self.centered).components
        basis = np.zeros((2, self.delta.shape[1]))
        basis[: min(2, len(comps))] = comps[:2]
        return {
            "axes": basis.tolist(),
            "classes": [
                {
                    "class": y,
                    "mu0": (basis @ self.prototypes[y, 0]).tolist(),
                    "mu1": (basis @ self.prototypes[y, 1]).tolist(),
                    "delta": (basis @ self.delta[y]).tolist(),
                }
                for y in range(self.delta.shape[0])
            ],
        }


def profile_features(features, labels, attributes, centered=True, n_rows=None, source="train"):
    protos = compute_prototypes(features, labels, attributes, n_rows)
    delta = compute_delta(protos)
    spec = spectrum(delta, centered)
    b = _orient(spec.components[0], delta)
    return BiasProfile(protos, delta, spec.ratios, spec.skewness, b, centered, source)


def shuffled_attributes(attributes, labels, seed):
    """Permute attribute labels within each class: the null control for the spectrum."""
    attrs = np.asarray(attributes).copy()
    labels = np.asarray(labels)
    rng = SeededRNG(seed).child(303)
    keys = labels if labels.ndim == 1 else np.zeros(len(attrs), dtype=np.int64)
    for key in np.unique(keys):
        idx = np.flatnonzero(keys == key)
        attrs[idx] = attrs[idx[rng.permutation(len(idx))]]
    return attrs


def profile_model(model, dataset, centered=True, bias_direction=None, shuffle_seed=None):
    """Profile the encoder features of ``dataset`` (normally the training split).

    ``bias_direction`` removes that direction from the features first (the
    after-removal profile). ``shuffle_seed`` permutes attributes within classes,
    giving the null control.
    """
    from .model import forward_features

    h = forward_features(model, dataset.features)
    if bias_direction is not None:
        h = remove_bias(h, bias_direction)
    labels = dataset.labels
    attrs = dataset.attributes
    if shuffle_seed is not None:
        attrs = shuffled_attributes(attrs, labels, shuffle_seed)
    n_rows = dataset.n_classes if labels.ndim == 1 else None
    if dataset.task == "binary":
        labels = dataset.class_labels
        n_rows = 2
    return profile_features(h, labels, attrs, centered, n_rows)


class BiasRemover(TransformerMixin, BaseEstimator):
    """Transformer that learns the bias direction from labelled features and removes it.

    ``fit(H, y, attributes=...)`` stores ``profile_`` and ``direction_``;
    ``transform`` projects the direction out of new features and needs no attributes.
    """

    def __init__(self, centered=True):
        self.centered = centered

    def fit(self, X, y, attributes=None):
        if attributes is None:
            raise ValueError("BiasRemover.fit needs attributes")
        X = check_array(X, dtype=np.float64)
        self.profile_ = profile_features(X, np.asarray(y), np.asarray(attributes), self.centered)
        self.direction_ = self.profile_.direction
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "direction_")
        X = check_array(X, dtype=np.float64)
        return remove_bias(X, self.direction_)
