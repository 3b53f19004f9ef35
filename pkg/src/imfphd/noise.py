"""Finite Gaussian-mixture model of measurement noise, plus EM fitting."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .gauss import LOG_2PI, PSD_TOL, gaussian_logpdf_chol, psd_sqrt, safe_cholesky, symmetrize

log = logging.getLogger(__name__)


class EmCollapseError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseTerm:
    delta: float
    mu: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        R = symmetrize(np.atleast_2d(np.asarray(self.R, dtype=float)))
        if R.shape != (mu.size, mu.size):
            raise ValueError(f"mu dim {mu.size} does not match R {R.shape}")
        if np.linalg.eigvalsh(R).min() < -PSD_TOL:
            raise ValueError("R is not positive semidefinite")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class NoiseMixtureModel:
    """Measurement noise density ``sum_l delta_l N(r; mu_l, R_l)``."""

    components: tuple[NoiseTerm, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("noise mixture needs at least one component")
        if len({c.mu.size for c in comps}) != 1:
            raise ValueError("all noise components must share a dimension")
        total = sum(c.delta for c in comps)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"noise weights sum to {total}, expected 1")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_arrays(cls, deltas, mus, Rs) -> "NoiseMixtureModel":
        return cls(tuple(NoiseTerm(d, m, R) for d, m, R in zip(deltas, mus, Rs)))

    @classmethod
    def gaussian(cls, R, mu=None) -> "NoiseMixtureModel":
        R = np.atleast_2d(np.asarray(R, dtype=float))
        mu = np.zeros(R.shape[0]) if mu is None else mu
        return cls((NoiseTerm(1.0, mu, R),))

    @property
    def L(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].mu.size

    @property
    def deltas(self) -> np.ndarray:
        return np.array([c.delta for c in self.components])

    def moment_matched(self) -> "NoiseMixtureModel":
        """Single Gaussian with the mixture's mean and covariance."""
        d = self.deltas
        mus = np.stack([c.mu for c in self.components])
        mean = d @ mus
        cov = sum(c.delta * (c.R + np.outer(c.mu - mean, c.mu - mean)) for c in self.components)
        return NoiseMixtureModel.gaussian(cov, mean)

    def to_records(self) -> list[dict]:
        return [
            {"delta": c.delta, "mu": c.mu.tolist(), "R": c.R.tolist()}
            for c in self.components
        ]

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> "NoiseMixtureModel":
        return cls(tuple(NoiseTerm(r["delta"], r["mu"], r["R"]) for r in records))


def sample_noise(model: NoiseMixtureModel, rng: np.random.Generator, mode: str = "vector") -> np.ndarray:
    """Draw one noise vector.

    ``mode="vector"`` picks one mixture component for the whole vector;
    ``mode="axis"`` picks a component independently per axis and draws from
    that component's marginal on the axis.
    """
    comps = model.components
    if mode == "vector":
        l = rng.choice(model.L, p=model.deltas) if model.L > 1 else 0
        c = comps[l]
        return c.mu + psd_sqrt(c.R) @ rng.standard_normal(model.dim)
    if mode == "axis":
        out = np.empty(model.dim)
        for d in range(model.dim):
            l = rng.choice(model.L, p=model.deltas) if model.L > 1 else 0
            c = comps[l]
            out[d] = c.mu[d] + np.sqrt(c.R[d, d]) * rng.standard_normal()
        return out
    raise ValueError(f"unknown noise mode {mode!r}")


def build_transition_matrix(model: NoiseMixtureModel) -> np.ndarray:
    """Model-switching matrix whose every row is the mixture weight vector.

    Entry ``[l, u]`` is the probability of moving from model ``l`` to ``u``.
    """
    d = model.deltas
    return np.tile(d / d.sum(), (model.L, 1))


@dataclass(frozen=True)
class EmFitReport:
    model: NoiseMixtureModel
    log_likelihood_trace: tuple[float, ...]
    iterations: int
    converged: bool


def _kmeanspp(x: np.ndarray, L: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, L):
        total = d2.sum()
        idx = rng.choice(len(x), p=d2 / total) if total > 0 else rng.integers(len(x))
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.stack(centers)


def _log_resp(x, weights, means, covs):
    chol = safe_cholesky(covs)
    dim = x.shape[1]
    lp = np.empty((len(x), len(weights)))
    for k in range(len(weights)):
        # one triangular solve per component instead of one per sample
        y = solve_triangular(chol[k], (x - means[k]).T, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(chol[k])))
        lp[:, k] = -0.5 * (dim * LOG_2PI + logdet + np.sum(y * y, axis=0)) + np.log(weights[k])
    norm = logsumexp(lp, axis=1)
    return lp - norm[:, None], norm


def em_fit(
    samples,
    L: int,
    seed: int = 0,
    max_iter: int = 500,
    tol: float = 1e-6,
    n_init: int = 3,
) -> EmFitReport:
    """Fit an ``L``-component Gaussian mixture to noise samples by EM.

    Initialization is k-means++ seeding followed by a hard nearest-center
    assignment. ``tol`` applies to the change in mean per-sample
    log-likelihood. Covariances are floored at ``1e-8`` times the
    per-dimension sample variance; a component that collapses below the
    floor is re-seeded from a random sample once, and a second collapse
    raises :class:`EmCollapseError`.

    Zero-mean terms that differ only in spread give k-means++ little to work
    with, so ``n_init`` seedings are run and the highest final likelihood
    wins.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("em_fit needs at least one sample")
    if x.ndim == 1:
        x = x[:, None]
    n, dim = x.shape
    if L < 1:
        raise ValueError("L must be at least 1")
    if n < 10 * L:
        raise ValueError(f"need at least {10 * L} samples for L={L}, got {n}")
    if n_init < 1:
        raise ValueError("n_init must be at least 1")

    rng = np.random.default_rng(seed)
    var = np.var(x, axis=0)
    floor = 1e-8 * np.where(var > 0, var, 1.0)

    if L == 1:
        mean = x.mean(axis=0)
        cov = np.atleast_2d(np.cov(x, rowvar=False, bias=True))
        cov = cov + np.diag(np.maximum(floor - np.diag(cov), 0.0))
        ll = float(np.mean(gaussian_logpdf_chol(x - mean, safe_cholesky(cov))))
        model = NoiseMixtureModel.from_arrays([1.0], [mean], [cov])
        return EmFitReport(model, (ll,), 1, True)

    best = None
    for _ in range(n_init):
        run = _em_run(x, L, rng, floor, var, max_iter, tol)
        if best is None or run[-1][-1] > best[-1][-1]:
            best = run
    weights, means, covs, it, converged, trace = best
    model = NoiseMixtureModel.from_arrays(weights / weights.sum(), means, covs)
    return EmFitReport(model, tuple(trace), it, converged)


def _em_run(x, L, rng, floor, var, max_iter, tol):
    n, dim = x.shape
    floor_mat = np.diag(floor)
    centers = _kmeanspp(x, L, rng)
    labels = np.argmin(((x[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    resp = np.zeros((n, L))
    resp[np.arange(n), labels] = 1.0
    # an empty cluster would give a zero-weight start; spread a little mass
    resp = 0.99 * resp + 0.01 / L

    reseeded = False
    trace: list[float] = []
    converged = False
    it = 0
    weights = means = covs = None
    for it in range(1, max_iter + 1):
        # M-step
        nk = resp.sum(axis=0)
        weights = nk / n
        means = (resp.T @ x) / nk[:, None]
        diff = x[:, None, :] - means[None]
        covs = np.einsum("nk,nki,nkj->kij", resp, diff, diff) / nk[:, None, None]
        covs = symmetrize(covs)
        eig_min = np.linalg.eigvalsh(covs).min(axis=1)
        collapsed = eig_min < floor.min()
        if np.any(collapsed):
            if reseeded:
                raise EmCollapseError(f"components {np.flatnonzero(collapsed).tolist()} collapsed twice")
            reseeded = True
            log.warning("EM component collapse; re-seeding %s", np.flatnonzero(collapsed).tolist())
            for k in np.flatnonzero(collapsed):
                means[k] = x[rng.integers(n)]
                covs[k] = np.diag(var) if np.all(var > 0) else np.eye(dim)
            # restart the likelihood trace: re-seeding is not an EM step
            trace.clear()
        covs = covs + floor_mat
        # E-step
        log_r, norm = _log_resp(x, weights, means, covs)
        ll = float(np.mean(norm))
        resp = np.exp(log_r)
        if trace and ll - trace[-1] < tol:
            trace.append(ll)
            converged = True
            break
        trace.append(ll)

    return weights, means, covs, it, converged, trace
