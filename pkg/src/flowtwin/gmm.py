"""2D Gaussian mixtures over (departure time, travel duration), fitted by EM.

One mixture per ordered area pair describes when trips start and how long
they take.  Covariance eigenvalues are floored, which keeps every matrix
SPD; eigenvalue clipping is the exact M-step maximizer under that
constraint, so the log-likelihood stays non-decreasing across iterations
even when the floor binds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError, ValidationError
from .seeding import substream

COVARIANCE_FLOOR = 1e-4
EM_TOL = 1e-6
EM_MAX_ITER = 200


def _floor_spd(cov: np.ndarray, floor: float) -> np.ndarray:
    """Clip eigenvalues of a symmetric matrix from below."""
    sym = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(sym)
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T


def _log_gaussian(X: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(cov)
    diff = (X - mean).T
    sol = np.linalg.solve(L, diff)
    return (
        -0.5 * X.shape[1] * np.log(2.0 * np.pi)
        - np.sum(np.log(np.diag(L)))
        - 0.5 * np.sum(sol * sol, axis=0)
    )


def _kmeanspp_centers(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = [X[int(rng.integers(n))]]
    for _ in range(1, k):
        d2 = np.min(
            [np.sum((X - c) ** 2, axis=1) for c in centers], axis=0
        )
        total = d2.sum()
        if total <= 0:
            centers.append(X[int(rng.integers(n))])
            continue
        centers.append(X[int(rng.choice(n, p=d2 / total))])
    return np.array(centers)


@dataclass
class GaussianMixture2D:
    """EM-fitted bivariate mixture with sklearn-style fit/sample surface."""

    n_components: int = 3
    seed: int = 0
    covariance_floor: float = COVARIANCE_FLOOR
    tol: float = EM_TOL
    max_iter: int = EM_MAX_ITER

    weights_: np.ndarray = field(default=None, repr=False)
    means_: np.ndarray = field(default=None, repr=False)
    covariances_: np.ndarray = field(default=None, repr=False)
    loglik_history_: list = field(default_factory=list, repr=False)
    converged_: bool = False

    def fit(self, X) -> "GaussianMixture2D":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != 2:
            raise ValidationError("expected an (n, 2) sample array", path="samples")
        n = len(X)
        if n < 1:
            raise DegenerateDataError("cannot fit a mixture to zero samples")
        k = min(self.n_components, n)
        if k < 1:
            raise DegenerateDataError("component count must be >= 1")
        rng = substream(self.seed, "gmm-init")
        centers = _kmeanspp_centers(X, k, rng)
        assign = np.argmin(
            np.stack([np.sum((X - c) ** 2, axis=1) for c in centers]), axis=0
        )
        weights = np.zeros(k)
        means = np.zeros((k, 2))
        covs = np.zeros((k, 2, 2))
        for j in range(k):
            mask = assign == j
            if not mask.any():
                weights[j] = 1.0 / n
                means[j] = centers[j]
                covs[j] = np.eye(2) * self.covariance_floor
                continue
            pts = X[mask]
            weights[j] = len(pts) / n
            means[j] = pts.mean(axis=0)
            covs[j] = _floor_spd(np.cov(pts.T, bias=True).reshape(2, 2), self.covariance_floor)
        weights = weights / weights.sum()

        self.loglik_history_ = []
        self.converged_ = False
        prev_ll = -np.inf
        for _ in range(self.max_iter):
            # E step
            log_resp = np.full((n, k), -np.inf)
            for j in range(k):
                if weights[j] > 0:
                    log_resp[:, j] = np.log(weights[j]) + _log_gaussian(X, means[j], covs[j])
            row_max = log_resp.max(axis=1, keepdims=True)
            log_norm = row_max[:, 0] + np.log(np.sum(np.exp(log_resp - row_max), axis=1))
            ll = float(log_norm.sum())
            self.loglik_history_.append(ll)
            if ll - prev_ll < self.tol and np.isfinite(prev_ll):
                self.converged_ = True
                break
            prev_ll = ll
            resp = np.exp(log_resp - log_norm[:, None])
            # M step
            nk = resp.sum(axis=0)
            weights = nk / n
            for j in range(k):
                if nk[j] <= 0.0:
                    continue  # dead component: weight 0 removes it from the E step
                means[j] = resp[:, j] @ X / nk[j]
                diff = X - means[j]
                cov = (resp[:, j][:, None] * diff).T @ diff / nk[j]
                covs[j] = _floor_spd(cov, self.covariance_floor)
            weights = weights / weights.sum()

        self.weights_ = weights
        self.means_ = means
        self.covariances_ = covs
        return self

    def log_likelihood(self, X) -> float:
        X = np.asarray(X, dtype=float)
        k = len(self.weights_)
        log_resp = np.full((len(X), k), -np.inf)
        for j in range(k):
            if self.weights_[j] > 0:
                log_resp[:, j] = np.log(self.weights_[j]) + _log_gaussian(X, self.means_[j], self.covariances_[j])
        row_max = log_resp.max(axis=1, keepdims=True)
        return float(np.sum(row_max[:, 0] + np.log(np.sum(np.exp(log_resp - row_max), axis=1))))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comps = rng.choice(len(self.weights_), size=n, p=self.weights_)
        out = np.empty((n, 2))
        chols = [np.linalg.cholesky(c) for c in self.covariances_]
        for i, j in enumerate(comps):
            out[i] = self.means_[j] + chols[j] @ rng.standard_normal(2)
        return out

    def to_json(self) -> dict:
        return {
            "weights": self.weights_.tolist(),
            "means": self.means_.tolist(),
            "covariances": self.covariances_.tolist(),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "GaussianMixture2D":
        g = cls(n_components=len(payload["weights"]))
        g.weights_ = np.asarray(payload["weights"], dtype=float)
        g.means_ = np.asarray(payload["means"], dtype=float)
        g.covariances_ = np.asarray(payload["covariances"], dtype=float)
        g.converged_ = True
        return g


def fit_prior_gmm(samples, n_components: int, seed: int) -> GaussianMixture2D:
    """Fit the (departure time s, duration min) prior for one area pair.

    The component count drops to the sample count when the pair is sparse.
    """
    X = np.asarray(samples, dtype=float).reshape(-1, 2)
    if len(X) < 1:
        raise DegenerateDataError("no samples for this pair")
    return GaussianMixture2D(n_components=n_components, seed=seed).fit(X)


@dataclass
class DeparturePriors:
    """Per ordered area pair: the fitted mixture plus fit bookkeeping."""

    mixtures: dict          # (origin, destination) -> GaussianMixture2D
    n_components: int = 3
    seed: int = 0

    def pairs(self):
        return sorted(self.mixtures)

    def __getitem__(self, pair):
        return self.mixtures[pair]

    def __contains__(self, pair):
        return pair in self.mixtures

    def to_json(self) -> dict:
        return {
            "n_components": self.n_components,
            "seed": self.seed,
            "pairs": [
                {"origin": m, "destination": n, **self.mixtures[(m, n)].to_json()}
                for m, n in self.pairs()
            ],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def from_json(cls, payload: dict) -> "DeparturePriors":
        mixtures = {
            (p["origin"], p["destination"]): GaussianMixture2D.from_json(p)
            for p in payload["pairs"]
        }
        return cls(mixtures=mixtures,
                   n_components=int(payload.get("n_components", 3)),
                   seed=int(payload.get("seed", 0)))

    @classmethod
    def load(cls, path) -> "DeparturePriors":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def fit_departure_priors(samples_by_pair: dict, n_components: int = 3, seed: int = 0) -> DeparturePriors:
    """Fit one mixture per pair; each pair gets its own derived RNG stream."""
    mixtures = {}
    for (m, n), rows in sorted(samples_by_pair.items()):
        if not len(rows):
            continue
        pair_seed = int(substream(seed, "prior", m, n).integers(2**63))
        mixtures[(m, n)] = fit_prior_gmm(rows, n_components, pair_seed)
    return DeparturePriors(mixtures=mixtures, n_components=n_components, seed=seed)
