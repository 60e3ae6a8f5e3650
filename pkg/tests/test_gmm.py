from __future__ import annotations

import numpy as np
import pytest

from flowtwin.errors import DegenerateDataError
from flowtwin.gmm import DeparturePriors, GaussianMixture2D, fit_departure_priors, fit_prior_gmm


def floor_eigenvalues(cov, floor):
    vals, vecs = np.linalg.eigh(np.asarray(cov, dtype=float))
    return (vecs * np.maximum(vals, floor)) @ vecs.T


class TestSingleComponent:
    def test_k1_is_sample_mean_and_cov(self):
        samples = [(600.0, 10.0), (620.0, 12.0)]
        g = fit_prior_gmm(samples, n_components=1, seed=0)
        assert g.means_[0] == pytest.approx([610.0, 11.0])
        # MLE covariance of the two points, then the eigenvalue floor
        expected = floor_eigenvalues([[100.0, 10.0], [10.0, 1.0]], 1e-4)
        assert g.covariances_[0] == pytest.approx(expected, abs=1e-8)
        assert g.weights_[0] == pytest.approx(1.0)

    def test_single_sample_floors_covariance(self):
        g = fit_prior_gmm([(100.0, 5.0)], n_components=1, seed=0)
        vals = np.linalg.eigvalsh(g.covariances_[0])
        assert np.all(vals >= 1e-4 - 1e-12)

    def test_zero_samples_degenerate(self):
        with pytest.raises(DegenerateDataError):
            fit_prior_gmm([], n_components=1, seed=0)

    def test_k_reduced_to_sample_count(self):
        g = fit_prior_gmm([(1.0, 2.0), (3.0, 4.0)], n_components=5, seed=0)
        assert len(g.weights_) == 2


class TestEMProperties:
    def test_loglik_monotone_on_random_fits(self, rng):
        for trial in range(8):
            X = rng.normal(size=(60, 2)) * [300.0, 5.0] + [30000.0, 15.0]
            g = GaussianMixture2D(n_components=3, seed=trial).fit(X)
            hist = np.asarray(g.loglik_history_)
            assert np.all(np.diff(hist) >= -1e-9), f"trial {trial}: {np.diff(hist).min()}"

    def test_weights_simplex(self, rng):
        X = rng.normal(size=(100, 2))
        g = GaussianMixture2D(n_components=4, seed=1).fit(X)
        assert g.weights_.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(g.weights_ >= 0)

    def test_planted_two_component_recovery(self):
        # generate-and-refit oracle: draw from a known mixture, refit, match means
        rng = np.random.default_rng(999)
        true_means = np.array([[30000.0, 12.0], [60000.0, 35.0]])
        true_covs = np.array([[[1.5e6, 0.0], [0.0, 4.0]], [[2.0e6, 300.0], [300.0, 9.0]]])
        weights = [0.4, 0.6]
        n = 10_000
        comps = rng.choice(2, size=n, p=weights)
        X = np.empty((n, 2))
        for j in range(2):
            take = comps == j
            L = np.linalg.cholesky(true_covs[j])
            X[take] = true_means[j] + rng.standard_normal((take.sum(), 2)) @ L.T
        g = GaussianMixture2D(n_components=2, seed=5).fit(X)
        # match fitted to true components by nearest mean
        order = np.argsort(g.means_[:, 0])
        fitted = g.means_[order]
        for j in range(2):
            rel = np.abs(fitted[j] - true_means[j]) / np.abs(true_means[j])
            assert np.all(rel < 0.05), f"component {j}: {rel}"

    def test_fit_is_deterministic(self, rng):
        X = rng.normal(size=(120, 2))
        a = GaussianMixture2D(n_components=3, seed=7).fit(X)
        b = GaussianMixture2D(n_components=3, seed=7).fit(X)
        assert np.array_equal(a.means_, b.means_)
        assert np.array_equal(a.weights_, b.weights_)
        assert np.array_equal(a.covariances_, b.covariances_)


class TestPriorsContainer:
    def test_round_trip_json(self, tmp_path):
        by_pair = {
            ("A", "B"): [(600.0, 10.0), (700.0, 12.0), (650.0, 11.0), (620.0, 9.0)],
            ("B", "A"): [(30000.0, 20.0), (31000.0, 22.0), (32000.0, 18.0)],
        }
        priors = fit_departure_priors(by_pair, n_components=2, seed=3)
        path = tmp_path / "priors.json"
        priors.save(path)
        again = DeparturePriors.load(path)
        assert again.pairs() == priors.pairs()
        for pair in priors.pairs():
            assert np.allclose(again[pair].means_, priors[pair].means_)

    def test_sampling_respects_weights(self, rng):
        g = GaussianMixture2D(n_components=1, seed=0).fit(
            np.array([[10.0, 1.0], [12.0, 2.0], [14.0, 3.0]]))
        draws = g.sample(500, rng)
        assert draws.shape == (500, 2)
        assert abs(draws[:, 0].mean() - 12.0) < 1.0
