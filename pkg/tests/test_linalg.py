import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nrc.errors import DimensionMismatch, NotPositiveDefinite
from nrc.linalg import as_matrix, gram, matvec, solve_spd, spd_factor

from conftest import gauss_jordan_inverse

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


class TestGram:
    def test_identity(self):
        np.testing.assert_array_equal(gram(np.eye(2)), np.eye(2))

    def test_single_column(self):
        np.testing.assert_array_equal(gram([[1.0], [2.0]]), [[5.0]])

    def test_psd_shape(self, rng):
        A = gram(rng.standard_normal((5, 3)))
        assert A.shape == (3, 3)
        assert np.all(np.diag(A) >= 0)
        assert np.all(np.linalg.eigvalsh(A) >= -1e-12)

    @given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 9)), elements=finite))
    @settings(max_examples=60, deadline=None)
    def test_exactly_symmetric(self, X):
        A = gram(X)
        assert np.max(np.abs(A - A.T)) == 0.0

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            gram([[1.0, np.nan]])


class TestSpdFactor:
    def test_scaled_identity(self):
        F = spd_factor(np.eye(2), ridge=1.0)
        np.testing.assert_allclose(solve_spd(F, [4.0, 2.0]), [2.0, 1.0])

    def test_singular(self):
        with pytest.raises(NotPositiveDefinite):
            spd_factor(np.zeros((2, 2)), ridge=0.0)

    def test_rank_deficient_gram(self, rng):
        X = rng.standard_normal((3, 6))
        with pytest.raises(NotPositiveDefinite):
            spd_factor(gram(X), ridge=0.0)

    def test_matches_gauss_jordan(self, rng):
        X = rng.standard_normal((4, 3))
        A = gram(X)
        b = rng.standard_normal(3)
        F = spd_factor(A, ridge=0.5)
        expected = gauss_jordan_inverse(A + 0.5 * np.eye(3)) @ b
        got = solve_spd(F, b)
        assert np.linalg.norm(got - expected) <= 1e-8 * np.linalg.norm(expected)

    def test_not_symmetric(self):
        with pytest.raises(ValueError):
            spd_factor(np.array([[2.0, 1.0], [0.0, 2.0]]))

    def test_negative_ridge(self):
        with pytest.raises(ValueError):
            spd_factor(np.eye(2), ridge=-1.0)


class TestSolveSpd:
    def test_two_identity(self):
        F = spd_factor(2 * np.eye(2))
        np.testing.assert_allclose(solve_spd(F, [2.0, 4.0]), [1.0, 2.0])

    def test_zero_rhs(self):
        F = spd_factor(np.eye(3))
        np.testing.assert_array_equal(solve_spd(F, np.zeros(3)), np.zeros(3))

    def test_residual_random_spd(self, rng):
        Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        A = Q @ np.diag(np.linspace(1.0, 50.0, 6)) @ Q.T
        A = (A + A.T) / 2
        b = rng.standard_normal(6)
        x = solve_spd(spd_factor(A), b)
        assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)

    def test_dimension_mismatch(self):
        F = spd_factor(np.eye(3))
        with pytest.raises(DimensionMismatch):
            solve_spd(F, [1.0, 2.0])

    @pytest.mark.parametrize("cond", [1.0, 1e2, 1e4, 1e6])
    def test_roundtrip_up_to_cond_1e6(self, rng, cond):
        n = 8
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        A = Q @ np.diag(np.geomspace(1.0, cond, n)) @ Q.T
        A = (A + A.T) / 2
        x = rng.standard_normal(n)
        got = solve_spd(spd_factor(A, 0.0), A @ x)
        assert np.linalg.norm(got - x) <= 1e-8 * np.linalg.norm(x)


class TestMatvec:
    X = np.array([[1.0, 2.0], [3.0, 4.0]])

    def test_identity(self):
        np.testing.assert_array_equal(matvec(np.eye(2), [3.0, 7.0]), [3.0, 7.0])

    def test_plain(self):
        np.testing.assert_array_equal(matvec(self.X, [1.0, 1.0]), [3.0, 7.0])

    def test_transposed(self):
        np.testing.assert_array_equal(matvec(self.X, [1.0, 0.0], transposed=True), [1.0, 2.0])

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            matvec(self.X, [1.0, 2.0, 3.0])

    def test_basis_vector_picks_column(self, rng):
        X = rng.standard_normal((5, 4))
        for i in range(4):
            np.testing.assert_array_equal(matvec(X, np.eye(4)[i]), X[:, i])


def test_as_matrix_is_column_major_and_does_not_freeze_caller():
    X = np.arange(6.0).reshape(2, 3)
    A = as_matrix(X)
    assert A.flags.f_contiguous
    assert X.flags.writeable
    with pytest.raises(DimensionMismatch):
        as_matrix(np.zeros((0, 3)))
