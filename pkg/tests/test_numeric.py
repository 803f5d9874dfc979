import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fairlens.exceptions import DomainError, NumericError, ShapeError
from fairlens.numeric import SeededRNG, cosine_similarity, sample_skewness, symmetric_eigen

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def random_symmetric(rng, n):
    a = rng.normal(size=(n, n))
    return a + a.T


class TestCosineSimilarity:
    def test_parallel_orthogonal_opposite(self):
        assert cosine_similarity([1, 0], [3, 0]) == 1.0
        assert cosine_similarity([1, 0], [0, 2]) == 0.0
        assert cosine_similarity([1, 1], [-2, -2]) == pytest.approx(-1.0)

    def test_zero_norm_names_argument(self):
        with pytest.raises(DomainError, match="'a'"):
            cosine_similarity([0, 0], [1, 0])
        with pytest.raises(DomainError, match="'b'"):
            cosine_similarity([1, 0], [0, 0])

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            cosine_similarity([1, 2], [1, 2, 3])

    @given(arrays(np.float64, 6, elements=finite), arrays(np.float64, 6, elements=finite),
           st.floats(0.01, 50), st.floats(0.01, 50))
    def test_bounded_and_scale_invariant(self, a, b, s, t):
        if np.linalg.norm(a) < 1e-6 or np.linalg.norm(b) < 1e-6:
            return
        c = cosine_similarity(a, b)
        assert -1.0 <= c <= 1.0
        assert cosine_similarity(s * a, t * b) == pytest.approx(c, abs=1e-9)
        assert cosine_similarity(b, a) == pytest.approx(c, abs=1e-12)


class TestSymmetricEigen:
    @pytest.mark.parametrize("n", [1, 2, 3, 5, 10, 17])
    def test_matches_lapack_oracle(self, rng, n):
        m = random_symmetric(rng, n)
        res = symmetric_eigen(m)
        ref = np.linalg.eigh(m)[0][::-1]
        np.testing.assert_allclose(res.eigenvalues, ref, atol=1e-10)
        np.testing.assert_allclose(m @ res.eigenvectors, res.eigenvectors * res.eigenvalues, atol=1e-9)
        np.testing.assert_allclose(res.eigenvectors.T @ res.eigenvectors, np.eye(n), atol=1e-10)

    def test_diagonal_sorted_descending(self):
        res = symmetric_eigen(np.diag([1.0, 5.0, 3.0]))
        np.testing.assert_array_equal(res.eigenvalues, [5.0, 3.0, 1.0])

    def test_known_two_by_two(self):
        res = symmetric_eigen([[2.0, 1.0], [1.0, 2.0]])
        np.testing.assert_allclose(res.eigenvalues, [3.0, 1.0], atol=1e-14)
        v = res.eigenvectors[:, 0]
        assert abs(abs(v[0]) - 1 / math.sqrt(2)) < 1e-12

    def test_rank_one_gram(self, rng):
        u = rng.normal(size=6)
        res = symmetric_eigen(np.outer(u, u))
        assert res.eigenvalues[0] == pytest.approx(u @ u)
        np.testing.assert_allclose(res.eigenvalues[1:], 0.0, atol=1e-12)

    def test_zero_and_empty(self):
        np.testing.assert_array_equal(symmetric_eigen(np.zeros((3, 3))).eigenvalues, np.zeros(3))
        assert symmetric_eigen(np.zeros((0, 0))).eigenvalues.shape == (0,)

    def test_rejects_bad_input(self):
        with pytest.raises(ShapeError):
            symmetric_eigen(np.ones((2, 3)))
        with pytest.raises(ShapeError):
            symmetric_eigen([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(DomainError):
            symmetric_eigen([[np.nan, 0.0], [0.0, 1.0]])

    def test_non_convergence_reported(self, rng):
        with pytest.raises(NumericError):
            symmetric_eigen(random_symmetric(rng, 8), max_sweeps=1)

    def test_huge_dynamic_range(self):
        m = np.array([[1e200, 1e-100], [1e-100, 1.0]])
        res = symmetric_eigen(m)
        assert res.eigenvalues[0] == 1e200
        assert res.eigenvalues[1] == pytest.approx(1.0)

    @given(arrays(np.float64, (4, 4), elements=st.floats(-10, 10)))
    def test_trace_and_reconstruction(self, a):
        m = a + a.T
        res = symmetric_eigen(m)
        assert res.eigenvalues.sum() == pytest.approx(np.trace(m), abs=1e-9)
        recon = res.eigenvectors @ np.diag(res.eigenvalues) @ res.eigenvectors.T
        np.testing.assert_allclose(recon, m, atol=1e-9)
        assert np.all(np.diff(res.eigenvalues) <= 1e-12)


class TestSkewness:
    def test_symmetric_sample_is_zero(self):
        assert sample_skewness([1.0, 2.0, 3.0]) == 0.0

    def test_hand_value(self):
        # deviations from the mean 1: (-1, -1, 2); m2 = 2, m3 = 2
        assert sample_skewness([0.0, 0.0, 3.0]) == pytest.approx(2.0 / 2.0**1.5)

    def test_matches_scipy_style_formula(self, rng):
        x = rng.exponential(size=50)
        d = x - x.mean()
        expected = np.mean(d**3) / np.mean(d**2) ** 1.5
        assert sample_skewness(x) == pytest.approx(expected, rel=1e-12)

    def test_errors(self):
        with pytest.raises(DomainError):
            sample_skewness([1.0, 2.0])
        with pytest.raises(DomainError):
            sample_skewness([2.0, 2.0, 2.0])

    @given(arrays(np.float64, 7, elements=st.floats(-5, 5)), st.floats(0.1, 10), st.floats(-5, 5))
    def test_affine_invariance_and_sign_flip(self, x, a, b):
        if np.std(x) < 1e-3:
            return
        g = sample_skewness(x)
        assert sample_skewness(a * x + b) == pytest.approx(g, abs=1e-7)
        assert sample_skewness(-x) == pytest.approx(-g, abs=1e-7)


class TestSeededRNG:
    def test_determinism_and_children(self):
        a, b = SeededRNG(7), SeededRNG(7)
        np.testing.assert_array_equal(a.normal(10), b.normal(10))
        np.testing.assert_array_equal(SeededRNG(7).child(1).uniform(5), SeededRNG(7).child(1).uniform(5))
        assert not np.array_equal(SeededRNG(7).child(1).uniform(5), SeededRNG(7).child(2).uniform(5))
        assert not np.array_equal(SeededRNG(7).uniform(5), SeededRNG(8).uniform(5))

    def test_child_independent_of_parent_consumption(self):
        r = SeededRNG(3)
        r.normal(100)
        np.testing.assert_array_equal(r.child(4).normal(3), SeededRNG(3).child(4).normal(3))

    def test_normal_moments(self):
        z = SeededRNG(0).normal(200_000)
        assert abs(z.mean()) < 0.01
        assert abs(z.std() - 1.0) < 0.01
        assert abs(np.mean(z**3)) < 0.03

    def test_uniform_range_and_mean(self):
        u = SeededRNG(1).uniform(100_000, low=-2.0, high=4.0)
        assert u.min() >= -2.0 and u.max() < 4.0
        assert abs(u.mean() - 1.0) < 0.02

    def test_shapes_and_scalars(self):
        r = SeededRNG(2)
        assert r.normal((3, 4)).shape == (3, 4)
        assert r.normal((3, 5)).shape == (3, 5)
        assert isinstance(r.normal(), float)
        assert sorted(r.permutation(6)) == list(range(6))
        assert np.linalg.norm(r.unit_vector(9)) == pytest.approx(1.0)
