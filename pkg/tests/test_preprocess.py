import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nrc.errors import BadDimension, DimensionMismatch, ZeroNormSample
from nrc.preprocess import (
    l2_normalize_columns,
    pca_fit,
    pca_inverse_transform,
    pca_transform,
)


class TestNormalize:
    def test_three_four_five(self):
        out = l2_normalize_columns(np.array([[3.0], [4.0]]))
        np.testing.assert_allclose(out[:, 0], [0.6, 0.8], rtol=0, atol=1e-15)

    def test_unit_column_unchanged(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_array_equal(l2_normalize_columns(X), X)

    def test_zero_column(self):
        with pytest.raises(ZeroNormSample, match="1 column"):
            l2_normalize_columns(np.array([[1.0, 0.0], [2.0, 0.0]]))

    def test_input_not_modified(self, rng):
        X = rng.standard_normal((4, 3))
        before = X.copy()
        l2_normalize_columns(X)
        np.testing.assert_array_equal(X, before)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_norms_are_one(self, D, N, seed):
        X = np.random.default_rng(seed).standard_normal((D, N)) + 0.01
        np.testing.assert_allclose(np.linalg.norm(l2_normalize_columns(X), axis=0), 1.0,
                                   atol=1e-12)


class TestPcaFit:
    def test_rank_one_line(self, rng):
        u = np.array([1.0, 1.0]) / np.sqrt(2)
        t = rng.standard_normal(40)
        X = np.outer(u, t)
        m = pca_fit(X, 1)
        np.testing.assert_allclose(m.components[:, 0], u, atol=1e-12)
        total = np.sum((X - X.mean(axis=1, keepdims=True)) ** 2) / (X.shape[1] - 1)
        np.testing.assert_allclose(m.explained_variance[0], total, rtol=1e-12)
        # coordinates are signed distances along the line
        np.testing.assert_allclose(pca_transform(m, X)[0], t - t.mean(), atol=1e-12)

    def test_full_dimension_round_trip(self, rng):
        X = rng.standard_normal((5, 30))
        m = pca_fit(X, 5)
        back = pca_inverse_transform(m, pca_transform(m, X))
        np.testing.assert_allclose(back, X, atol=1e-8)

    def test_isotropic_variances_close(self):
        X = np.random.default_rng(3).standard_normal((2, 5000))
        v = pca_fit(X, 2).explained_variance
        assert v[1] / v[0] > 0.9

    @pytest.mark.parametrize("d", [0, 4, 1.5])
    def test_bad_dimension(self, rng, d):
        with pytest.raises(BadDimension):
            pca_fit(rng.standard_normal((3, 10)), d)

    def test_d_bounded_by_samples(self, rng):
        with pytest.raises(BadDimension):
            pca_fit(rng.standard_normal((10, 3)), 4)

    @pytest.mark.parametrize("shape", [(6, 40), (40, 6)])
    def test_orthonormal_sorted_signed(self, rng, shape):
        X = rng.standard_normal(shape) * np.linspace(1, 3, shape[0])[:, None]
        d = min(shape)
        m = pca_fit(X, d)
        U = m.components
        np.testing.assert_allclose(U.T @ U, np.eye(d), atol=1e-10)
        assert np.all(np.diff(m.explained_variance) <= 0)
        assert np.all(m.explained_variance >= 0)
        idx = np.argmax(np.abs(U), axis=0)
        assert np.all(U[idx, np.arange(d)] > 0)

    @pytest.mark.parametrize("shape", [(6, 40), (40, 6)])
    def test_variance_matches_projection(self, rng, shape):
        X = rng.standard_normal(shape)
        m = pca_fit(X, min(shape) - 1)
        Z = pca_transform(m, X)
        np.testing.assert_allclose(Z.var(axis=1, ddof=1), m.explained_variance, atol=1e-8)

    def test_gram_route_matches_covariance_route(self, rng):
        # N < D takes the Gram route; its transposed twin takes the covariance route
        X = rng.standard_normal((30, 8)) * np.arange(1, 31)[:, None]
        m = pca_fit(X, 4)
        Xc = X - X.mean(axis=1, keepdims=True)
        evals, V = np.linalg.eigh(Xc @ Xc.T / 7)
        np.testing.assert_allclose(m.explained_variance, evals[::-1][:4], rtol=1e-9)
        np.testing.assert_allclose(np.abs(m.components.T @ V[:, ::-1][:, :4]), np.eye(4),
                                   atol=1e-8)

    def test_gram_route_pads_rank_deficient_basis(self, rng):
        # 5 samples span only 4 centered directions in R^12
        X = rng.standard_normal((12, 5))
        m = pca_fit(X, 5)
        np.testing.assert_allclose(m.components.T @ m.components, np.eye(5), atol=1e-10)
        assert m.explained_variance[-1] < 1e-20

    def test_deterministic(self, rng):
        X = rng.standard_normal((8, 20))
        a, b = pca_fit(X, 3), pca_fit(X.copy(), 3)
        np.testing.assert_array_equal(a.components, b.components)


class TestPcaTransform:
    def test_mean_maps_to_zero(self, rng):
        X = rng.standard_normal((6, 25))
        m = pca_fit(X, 3)
        np.testing.assert_allclose(pca_transform(m, X.mean(axis=1)), 0, atol=1e-14)

    def test_vector_and_matrix_agree(self, rng):
        X = rng.standard_normal((6, 25))
        m = pca_fit(X, 3)
        np.testing.assert_allclose(pca_transform(m, X[:, 4]), pca_transform(m, X)[:, 4],
                                   atol=1e-14)

    def test_dimension_mismatch(self, rng):
        m = pca_fit(rng.standard_normal((6, 25)), 2)
        with pytest.raises(DimensionMismatch):
            pca_transform(m, np.ones((5, 2)))
        with pytest.raises(DimensionMismatch):
            pca_inverse_transform(m, np.ones((3, 2)))

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-3, 3), st.integers(0, 2**32 - 1))
    def test_affine(self, alpha, seed):
        r = np.random.default_rng(seed)
        m = pca_fit(r.standard_normal((5, 20)), 3)
        x, x2 = r.standard_normal(5), r.standard_normal(5)
        lhs = pca_transform(m, alpha * x + (1 - alpha) * x2)
        rhs = alpha * pca_transform(m, x) + (1 - alpha) * pca_transform(m, x2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestPipelineOrder:
    def test_project_then_normalize(self, rng):
        from nrc.bench import prepare_features

        train = rng.standard_normal((10, 30)) + 2.0
        test = rng.standard_normal((10, 5)) + 2.0
        Xtr, Xte, model = prepare_features(train, test, pca_dim=4)
        expected = pca_transform(pca_fit(train, 4), train)
        expected /= np.linalg.norm(expected, axis=0)
        np.testing.assert_allclose(Xtr, expected, atol=1e-14)
        np.testing.assert_allclose(np.linalg.norm(Xte, axis=0), 1.0, atol=1e-12)
        # PCA statistics come from the training partition only
        np.testing.assert_allclose(model.mean, train.mean(axis=1), rtol=1e-15)
