import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fairlens.datagen import GenConfig, generate_extreme_bias, generate_synthetic
from fairlens.estimators import BaselineClassifier, ProtectedEmbeddingClassifier


@pytest.fixture(scope="module")
def data():
    cfg = GenConfig(n_classes=3, feature_dim=5, n_per_class=60, spread=0.5, shift=2.0, skew=0.8)
    return generate_synthetic(cfg)


FAST = dict(hidden=(12, 6), embed_dim=8, epochs=15, batch_size=32)


class TestProtectedEmbeddingClassifier:
    def test_fit_predict_string_labels(self, data):
        names = np.array(["cat", "dog", "eel"])[data.labels]
        est = ProtectedEmbeddingClassifier(**FAST).fit(data.features, names, attributes=data.attributes)
        pred = est.predict(data.features)
        assert set(pred) <= set(names)
        assert est.score(data.features, names) > 0.9
        proba = est.predict_proba(data.features)
        np.testing.assert_allclose(proba.sum(1), 1.0)
        np.testing.assert_array_equal(est.classes_[proba.argmax(1)], pred)

    def test_transform_shape_and_removal(self, data):
        est = ProtectedEmbeddingClassifier(remove_bias=True, **FAST).fit(
            data.features, data.labels, attributes=data.attributes
        )
        h = est.transform(data.features)
        assert h.shape == (len(data), 6)
        np.testing.assert_allclose(h @ est.bias_direction_, 0.0, atol=1e-9)

    def test_needs_attributes_and_fit(self, data):
        with pytest.raises(ValueError):
            ProtectedEmbeddingClassifier(**FAST).fit(data.features, data.labels)
        with pytest.raises(NotFittedError):
            ProtectedEmbeddingClassifier().predict(data.features)

    def test_params_and_clone(self):
        est = ProtectedEmbeddingClassifier(temperature=0.05, epochs=3)
        params = est.get_params()
        assert params["temperature"] == 0.05 and params["epochs"] == 3
        assert clone(est).get_params() == params

    def test_feature_count_checked(self, data):
        est = ProtectedEmbeddingClassifier(**FAST).fit(data.features, data.labels, attributes=data.attributes)
        with pytest.raises(ValueError):
            est.predict(data.features[:, :3])

    def test_deterministic(self, data):
        a = ProtectedEmbeddingClassifier(**FAST).fit(data.features, data.labels, attributes=data.attributes)
        b = ProtectedEmbeddingClassifier(**FAST).fit(data.features, data.labels, attributes=data.attributes)
        np.testing.assert_array_equal(a.decision_function(data.features), b.decision_function(data.features))

    def test_multilabel(self):
        cfg = GenConfig(task="multilabel", n_labels=2, n_per_class=40, feature_dim=4, spread=0.5)
        ds = generate_synthetic(cfg)
        est = ProtectedEmbeddingClassifier(hidden=(8,), embed_dim=4, epochs=10, batch_size=16, temperature=0.5)
        est.fit(ds.features, ds.labels, attributes=ds.attributes)
        assert est.predict(ds.features).shape == (80, 2)
        assert np.all((est.predict_proba(ds.features) >= 0) & (est.predict_proba(ds.features) <= 1))

    def test_binary(self):
        cfg = GenConfig(task="binary", n_classes=2, feature_dim=4, n_per_class=40, spread=0.5, shift=2.0)
        ds = generate_extreme_bias(cfg)["test"]
        est = ProtectedEmbeddingClassifier(task="binary", head_update="both", hidden=(8,), embed_dim=4,
                                           epochs=10, batch_size=16)
        est.fit(ds.features, ds.class_labels, attributes=ds.attributes)
        proba = est.predict_proba(ds.features)
        assert proba.shape == (len(ds), 2)
        np.testing.assert_allclose(proba.sum(1), 1.0)


class TestBaselineClassifier:
    def test_fit_predict(self, data):
        est = BaselineClassifier(**FAST).fit(data.features, data.labels, attributes=data.attributes)
        assert est.score(data.features, data.labels) > 0.9
        np.testing.assert_allclose(est.predict_proba(data.features).sum(1), 1.0)
        assert est.bias_profile_.ratios.shape == (2,)
