"""scikit-learn style wrappers around the training and inference functions.

``fit`` takes the protected attribute as a keyword (``attributes=``); prediction,
probabilities and ``transform`` take features only.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .bias import profile_model, remove_bias
from .datagen import Dataset
from .model import (
    ClassifierModel,
    EncoderSpec,
    TrainConfig,
    forward_features,
    predict,
    predict_scores,
    train,
)


class _FairlensClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    _variant = "protected"

    def __init__(self, hidden=(64, 64, 32), embed_dim=128, temperature=0.1, lr=0.1, momentum=0.9,
                 weight_decay=5e-4, batch_size=128, epochs=60, schedule="step", step_factor=0.1,
                 step_period=20, exp_decay=0.999, head_update="matched", task="auto", tied=False,
                 remove_bias=False, centered=True, random_state=0):
        self.hidden = hidden
        self.embed_dim = embed_dim
        self.temperature = temperature
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.epochs = epochs
        self.schedule = schedule
        self.step_factor = step_factor
        self.step_period = step_period
        self.exp_decay = exp_decay
        self.head_update = head_update
        self.task = task
        self.tied = tied
        self.remove_bias = remove_bias
        self.centered = centered
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(
            lr=self.lr, momentum=self.momentum, weight_decay=self.weight_decay,
            batch_size=self.batch_size, epochs=self.epochs, schedule=self.schedule,
            step_factor=self.step_factor, step_period=self.step_period, exp_decay=self.exp_decay,
            temperature=self.temperature, head_update=self.head_update, seed=self.random_state,
        )

    def _resolve_task(self, y):
        if self.task != "auto":
            return self.task
        return "multilabel" if y.ndim == 2 else "multiclass"

    def fit(self, X, y, attributes=None):
        """Train on features ``X``, targets ``y`` and the binary ``attributes`` vector."""
        if attributes is None:
            raise ValueError(f"{type(self).__name__}.fit needs attributes=")
        X, y = check_X_y(X, y, dtype=np.float64, multi_output=True)
        attrs = np.asarray(attributes)
        task = self._resolve_task(y)
        if task == "multiclass":
            self.classes_, encoded = np.unique(y, return_inverse=True)
            ds = Dataset(X, encoded, attrs, task=task, n_classes=len(self.classes_))
            n_out = len(self.classes_)
        elif task == "binary":
            self.classes_, encoded = np.unique(y, return_inverse=True)
            if len(self.classes_) != 2:
                raise ValueError("binary task needs exactly two classes in y")
            ds = Dataset(X, encoded, attrs, task=task)
            n_out = 1
        else:
            ds = Dataset(X, y, attrs, task=task)
            self.classes_ = np.arange(ds.n_labels)
            n_out = ds.n_labels
        encoder = EncoderSpec((X.shape[1],) + tuple(self.hidden))
        model = ClassifierModel.create(
            encoder, self._variant, task, n_out, embed_dim=self.embed_dim,
            temperature=self.temperature, seed=self.random_state, tied=self.tied,
        )
        self.model_, self.history_ = train(model, ds, None, self._train_config())
        self.task_ = task
        self.n_features_in_ = X.shape[1]
        if task == "binary" or self.epochs == 0:
            self.bias_profile_ = None
        else:
            self.bias_profile_ = profile_model(self.model_, ds, centered=self.centered)
        if self.remove_bias and self.bias_profile_ is None:
            raise ValueError("bias removal needs a multiclass or multilabel fit with at least one epoch")
        return self

    @property
    def bias_direction_(self):
        check_is_fitted(self, "model_")
        return None if self.bias_profile_ is None else self.bias_profile_.direction

    def _direction(self):
        return self.bias_direction_ if self.remove_bias else None

    def _check(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def predict(self, X):
        X = self._check(X)
        out = predict(self.model_, X, self._direction())
        if self.task_ == "multilabel":
            return out
        return self.classes_[out]

    def decision_function(self, X):
        """Ensemble scores (protected) or head outputs (baseline), one column per output."""
        X = self._check(X)
        return predict_scores(self.model_, X, self._direction())

    def predict_proba(self, X):
        """Class probabilities: the normalised ensemble for protected models."""
        scores = self.decision_function(X)
        if self.task_ == "multiclass":
            return scores / scores.sum(axis=1, keepdims=True)
        if self.task_ == "binary":
            p = scores[:, 0] / (2.0 if self._variant == "protected" else 1.0)
            return np.column_stack([1.0 - p, p])
        return scores / (2.0 if self._variant == "protected" else 1.0)

    def transform(self, X):
        """Encoder features, with the bias direction projected out when ``remove_bias``."""
        X = self._check(X)
        h = forward_features(self.model_, X)
        d = self._direction()
        return h if d is None else remove_bias(h, d)


class ProtectedEmbeddingClassifier(_FairlensClassifier):
    """MLP encoder with one cosine-softmax label-embedding head per attribute value.

    Inference sums the two heads' probabilities, so it never needs the attribute.
    Set ``remove_bias=True`` to project the training bias direction out of the
    features before the heads.
    """

    _variant = "protected"


class BaselineClassifier(_FairlensClassifier):
    """MLP encoder with a single linear softmax (or sigmoid) head."""

    _variant = "baseline"
