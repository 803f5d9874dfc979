import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.decomposition import PCA

from fairlens.bias import (
    BiasProfile,
    BiasRemover,
    bias_direction,
    compute_delta,
    compute_prototypes,
    profile_features,
    profile_model,
    remove_bias,
    shuffled_attributes,
    spectrum,
)
from fairlens.datagen import GenConfig, generate_synthetic
from fairlens.exceptions import DataError, DomainError, ShapeError
from fairlens.model import ClassifierModel, EncoderSpec, TrainConfig, train

vec = arrays(np.float64, 5, elements=st.floats(-50, 50))


class TestPrototypes:
    def test_cell_means(self):
        H = np.array([[1.0, 0.0], [3.0, 0.0], [0.0, 2.0], [0.0, 4.0]])
        protos = compute_prototypes(H, [0, 0, 0, 0], [0, 0, 1, 1])
        np.testing.assert_array_equal(protos[0, 0], [2.0, 0.0])
        np.testing.assert_array_equal(protos[0, 1], [0.0, 3.0])
        np.testing.assert_array_equal(compute_delta(protos), [[-2.0, 3.0]])

    def test_multilabel_rows_use_positives(self):
        H = np.array([[1.0], [2.0], [5.0], [7.0]])
        Y = np.array([[1, 0], [1, 1], [1, 1], [0, 1]])
        protos = compute_prototypes(H, Y, [0, 0, 1, 1])
        np.testing.assert_array_equal(protos[:, :, 0], [[1.5, 5.0], [2.0, 6.0]])

    def test_empty_cell_named(self):
        with pytest.raises(DataError, match=r"y=1, v=0"):
            compute_prototypes(np.zeros((3, 2)), [0, 0, 1], [0, 1, 1])

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            compute_prototypes(np.zeros((3, 2)), [0, 1], [0, 1, 1])
        with pytest.raises(ShapeError):
            compute_delta(np.zeros((2, 3)))


class TestSpectrum:
    def test_planted_rank_one(self):
        u = np.array([1.0, 2.0, 2.0]) / 3.0
        delta = np.outer([1.0, 2.0, 3.0, 4.0], u)
        spec = spectrum(delta, centered=True)
        assert spec.ratios[0] == pytest.approx(1.0)
        np.testing.assert_allclose(spec.ratios[1:], 0.0, atol=1e-12)
        np.testing.assert_allclose(abs(spec.components[0] @ u), 1.0)

    def test_centered_matches_sklearn_pca(self, rng):
        delta = rng.normal(size=(10, 6))
        spec = spectrum(delta, centered=True)
        ref = PCA().fit(delta).explained_variance_ratio_
        np.testing.assert_allclose(spec.ratios, ref[:9], atol=1e-10)

    def test_uncentered_uses_raw_second_moment(self, rng):
        delta = rng.normal(size=(4, 7)) + 3.0
        spec = spectrum(delta, centered=False)
        sv = np.linalg.svd(delta, compute_uv=False) ** 2
        np.testing.assert_allclose(spec.ratios, sv / sv.sum(), atol=1e-12)
        assert len(spec.ratios) == 4

    def test_shared_offset_invisible_when_centered(self):
        delta = np.tile([0.0, 5.0, 0.0], (4, 1)) + np.array([[1, 0, 0], [-1, 0, 0], [0, 0, 1], [0, 0, -1.0]])
        assert spectrum(delta, centered=False).ratios[0] > 0.8
        assert spectrum(delta, centered=True).ratios[0] == pytest.approx(0.5)

    def test_flat_spectrum_zero_skew(self):
        delta = np.vstack([np.eye(3), -np.eye(3)])
        spec = spectrum(delta, centered=False)
        assert spec.skewness == 0.0
        np.testing.assert_allclose(spec.ratios, 1 / 3)

    def test_too_few_ratios_nan_skew(self):
        assert math.isnan(spectrum(np.array([[1.0, 0.0], [0.0, 1.0]]), centered=True).skewness)

    def test_degenerate(self):
        with pytest.raises(DomainError, match="degenerate"):
            spectrum(np.ones((3, 2)), centered=True)
        with pytest.raises(DomainError):
            spectrum(np.zeros((1, 2)), centered=True)

    def test_rotation_invariance(self, rng):
        delta = rng.normal(size=(6, 4))
        q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        a, b = spectrum(delta), spectrum(delta @ q)
        np.testing.assert_allclose(a.ratios, b.ratios, atol=1e-12)
        assert a.skewness == pytest.approx(b.skewness, abs=1e-9)

    def test_sign_convention(self, rng):
        delta = rng.normal(size=(5, 3)) + [2.0, 0.0, 0.0]
        b = bias_direction(delta)
        assert b @ delta.mean(0) >= 0
        assert np.linalg.norm(b) == pytest.approx(1.0)
        np.testing.assert_allclose(bias_direction(delta, centered=False) @ delta.mean(0) >= 0, True)


class TestRemoval:
    def test_simple(self):
        np.testing.assert_allclose(remove_bias([[3.0, 4.0]], [0.0, 2.0]), [[3.0, 0.0]])

    def test_zero_direction(self):
        with pytest.raises(DomainError):
            remove_bias(np.ones((2, 2)), np.zeros(2))

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            remove_bias(np.ones((2, 3)), np.ones(2))

    @given(vec, vec)
    def test_invariants(self, h, b):
        if np.linalg.norm(b) < 1e-6:
            return
        u = b / np.linalg.norm(b)
        t = remove_bias(h, b)
        scale = max(1.0, np.linalg.norm(h))
        assert abs(t @ u) <= 1e-9 * scale
        np.testing.assert_allclose(remove_bias(t, b), t, atol=1e-9 * scale)
        assert h @ h == pytest.approx(t @ t + (h @ u) ** 2, rel=1e-9, abs=1e-9)

    def test_direction_orthogonal_to_features_changes_nothing(self):
        H = np.array([[1.0, 2.0, 0.0], [3.0, -1.0, 0.0]])
        np.testing.assert_array_equal(remove_bias(H, [0.0, 0.0, 1.0]), H)


class TestShuffledControl:
    def test_preserves_counts_within_class(self):
        labels = np.repeat([0, 1, 2], 20)
        attrs = np.tile([0, 0, 0, 1], 15)
        out = shuffled_attributes(attrs, labels, seed=4)
        for y in range(3):
            assert out[labels == y].sum() == attrs[labels == y].sum()
        assert not np.array_equal(out, attrs)

    def test_null_spectrum_is_flatter_than_planted(self):
        rng = np.random.default_rng(0)
        k, d, n = 8, 16, 200
        labels = np.repeat(np.arange(k), n)
        attrs = np.tile(np.r_[np.zeros(n // 2), np.ones(n // 2)].astype(int), k)
        u = np.eye(d)[0]
        H = rng.normal(size=(k * n, d)) + 4.0 * attrs[:, None] * u * (1 + labels[:, None] % 2)
        planted = profile_features(H, labels, attrs)
        null = profile_features(H, labels, shuffled_attributes(attrs, labels, 1))
        assert planted.pc1_ratio > 0.9
        assert abs(planted.direction @ u) > 0.99
        assert null.pc1_ratio < 0.5


class TestProfileAndEstimator:
    def test_profile_round_trip_and_plot(self, rng):
        H = rng.normal(size=(40, 3))
        labels = np.repeat([0, 1, 2, 3], 10)
        attrs = np.tile([0, 1], 20)
        prof = profile_features(H, labels, attrs)
        back = BiasProfile.from_dict(prof.to_dict())
        np.testing.assert_array_equal(back.delta, prof.delta)
        assert back.skewness == pytest.approx(prof.skewness)
        payload = prof.plot_payload()
        assert len(payload["classes"]) == 4
        assert len(payload["classes"][0]["mu0"]) == 2
        with pytest.raises(DataError):
            BiasProfile.from_dict({"delta": []})

    def test_removal_flattens_planted_profile(self):
        rng = np.random.default_rng(1)
        labels = np.repeat(np.arange(5), 40)
        attrs = np.tile([0, 1], 100)
        H = rng.normal(size=(200, 4))
        H[:, 0] += 3.0 * attrs * (labels + 1)
        before = profile_features(H, labels, attrs)
        after = profile_features(remove_bias(H, before.direction), labels, attrs)
        assert after.pc1_ratio < before.pc1_ratio

    def test_bias_remover_transformer(self, rng):
        H = rng.normal(size=(60, 4))
        labels = np.repeat([0, 1, 2], 20)
        attrs = np.tile([0, 1], 30)
        H[:, 2] += 4.0 * attrs * labels
        est = BiasRemover().fit(H, labels, attributes=attrs)
        out = est.transform(H)
        np.testing.assert_allclose(out @ est.direction_, 0.0, atol=1e-9)
        assert est.get_params() == {"centered": True}
        with pytest.raises(ValueError):
            BiasRemover().fit(H, labels)

    def test_profile_model_after_removal_and_control(self):
        cfg = GenConfig(n_classes=4, feature_dim=6, n_per_class=60, spread=1.0, shift=4.0)
        ds = generate_synthetic(cfg)
        m = ClassifierModel.create(EncoderSpec((6, 8, 5)), "baseline", "multiclass", 4)
        m, _ = train(m, ds, None, TrainConfig(epochs=3, batch_size=32))
        prof = profile_model(m, ds)
        after = profile_model(m, ds, bias_direction=prof.direction)
        np.testing.assert_allclose(after.delta @ prof.direction, 0.0, atol=1e-9)
        ctrl = profile_model(m, ds, shuffle_seed=0)
        assert ctrl.prototypes.shape == prof.prototypes.shape
