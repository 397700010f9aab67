import math
from fractions import Fraction

import numpy as np
import pytest

from sparsevae.baselines.isoforest import (
    average_path_length,
    isoforest_fit,
    isoforest_random_search,
    isoforest_score,
)
from sparsevae.baselines.pca import pca_fit, pca_reconstruct
from sparsevae.errors import ConfigError, DimensionError


class TestPca:
    def test_line(self, rng):
        t = rng.normal(size=50)
        direction = np.array([3.0, 4.0]) / 5.0
        X = np.outer(t, direction) + np.array([1.0, -2.0])
        m = pca_fit(X, 1)
        assert abs(abs(m.components[0] @ direction) - 1.0) < 1e-12
        _, dev = pca_reconstruct(m, X)
        assert dev.max() < 1e-24

    def test_full_basis_exact(self, rng):
        X = rng.normal(size=(30, 4))
        m = pca_fit(X, 4)
        x_tilde, dev = pca_reconstruct(m, X)
        np.testing.assert_allclose(x_tilde, X, atol=1e-12)
        assert dev.max() <= 1e-12

    def test_orthonormal(self, rng):
        m = pca_fit(rng.normal(size=(40, 6)), 4)
        np.testing.assert_allclose(m.components @ m.components.T, np.eye(4), atol=1e-8)

    def test_mean_reconstructs_to_mean(self, rng):
        X = rng.normal(size=(20, 3))
        m = pca_fit(X, 1)
        x_tilde, dev = pca_reconstruct(m, m.mean[None])
        np.testing.assert_allclose(x_tilde[0], m.mean, atol=1e-15)
        assert dev[0] == pytest.approx(0.0, abs=1e-30)

    def test_outlier(self, rng):
        X = np.outer(rng.normal(size=30), [1.0, 1.0, 0.0])
        m = pca_fit(X, 1)
        _, dev_in = pca_reconstruct(m, X)
        _, dev_out = pca_reconstruct(m, np.array([[0.0, 0.0, 3.0]]))
        assert dev_out[0] > dev_in.max()

    def test_monotone_in_k(self, rng):
        X = rng.normal(size=(50, 5)) @ rng.normal(size=(5, 5))
        devs = [pca_reconstruct(pca_fit(X, k), X)[1].mean() for k in range(1, 6)]
        assert all(b <= a + 1e-12 for a, b in zip(devs, devs[1:]))

    def test_errors(self, rng):
        with pytest.raises(ConfigError):
            pca_fit(rng.normal(size=(10, 2)), 3)
        with pytest.raises(DimensionError):
            pca_reconstruct(pca_fit(rng.normal(size=(10, 2)), 1), np.zeros((1, 3)))


def _c_oracle(n):
    """c(n) from exact rational harmonic numbers."""
    if n <= 1:
        return 0.0
    h = sum(Fraction(1, i) for i in range(1, n))
    return float(2 * h - Fraction(2 * (n - 1), n))


class TestIsoForest:
    def test_average_path_length(self):
        assert average_path_length(2) == 1.0
        for n in (1, 3, 7, 256, 999):
            assert float(average_path_length(n)) == pytest.approx(_c_oracle(n), rel=1e-13)

    def test_score_half_at_average_depth(self, rng):
        m = isoforest_fit(rng.normal(size=(64, 2)), 50, 0.1, seed=0)
        c = float(average_path_length(m.subsample_size))
        assert 2.0 ** (-c / c) == 0.5
        # a forest scoring exactly E[h] = c is built by hand below
        for t in m.trees:
            t.feature[:] = -1
            t.depth[:] = 0
            t.size[:] = m.subsample_size
        np.testing.assert_allclose(isoforest_score(m, rng.normal(size=(3, 2))), 0.5, rtol=1e-15)

    def test_deterministic(self, rng):
        X = rng.normal(size=(100, 3))
        a, b = isoforest_fit(X, 60, 0.2, seed=4), isoforest_fit(X, 60, 0.2, seed=4)
        for ta, tb in zip(a.trees, b.trees):
            assert np.array_equal(ta.feature, tb.feature) and np.array_equal(ta.threshold, tb.threshold)

    def test_single_point(self):
        m = isoforest_fit(np.array([[1.0, 2.0]]), 50, 0.1, seed=0)
        assert all(t.feature.size == 1 and t.feature[0] == -1 for t in m.trees)
        s = m.score(np.array([[1.0, 2.0], [9.0, -9.0]]))
        assert s[0] == s[1]

    def test_heights(self, rng):
        m = isoforest_fit(rng.normal(size=(2000, 3)), 50, 0.1, seed=1)
        assert m.subsample_size == 256
        assert max(t.height for t in m.trees) <= 8

    def test_planted_outlier(self, rng):
        X = rng.normal(scale=0.1, size=(300, 2))
        X[0] = [5.0, 5.0]
        s = isoforest_fit(X, 100, 0.05, seed=0).score(X)
        assert s[0] > np.median(s[1:])
        assert ((0 < s) & (s < 1)).all()

    def test_contamination_threshold(self, rng):
        X = rng.normal(size=(500, 2))
        m = isoforest_fit(X, 50, 0.2, seed=0)
        assert abs(m.predict(X).mean() - 0.2) < 0.01

    @pytest.mark.parametrize("n_est,cont", [(49, 0.1), (401, 0.1), (100, 0.0), (100, 0.81)])
    def test_param_ranges(self, rng, n_est, cont):
        with pytest.raises(ConfigError):
            isoforest_fit(rng.normal(size=(10, 2)), n_est, cont)


@pytest.fixture(scope="module")
def data():
    r = np.random.default_rng(0)
    X_train = r.normal(size=(200, 2))
    X_eval = np.vstack([r.normal(size=(90, 2)), r.normal(loc=4.0, size=(10, 2))])
    y_eval = np.r_[np.zeros(90, int), np.ones(10, int)]
    return X_train, X_eval, y_eval


class TestRandomSearch:
    def test_single_try(self, data):
        best, trials = isoforest_random_search(*data, tries=1, seed=3)
        assert len(trials) == 1
        assert best.n_estimators == trials[0]["n_estimators"]
        assert best.contamination == trials[0]["contamination"]
        assert 50 <= best.n_estimators <= 400 and 0 < best.contamination <= 0.8

    def test_deterministic_and_prefix(self, data):
        a = isoforest_random_search(*data, tries=12, seed=7)[1]
        b = isoforest_random_search(*data, tries=12, seed=7)[1]
        assert a == b
        prefix = isoforest_random_search(*data, tries=4, seed=7)[1]
        assert prefix == a[:4]
        trunc = lambda t: math.floor(t["f1"] * 100 + 1e-9)
        assert max(map(trunc, a)) >= max(map(trunc, prefix))

    def test_tries_must_be_positive(self, data):
        with pytest.raises(ConfigError):
            isoforest_random_search(*data, tries=0)
