"""Gaussian-mixture PHD filter: predict, update, mixture management, extraction.

The update is exposed in two layers. :func:`phd_update` returns just the
posterior intensity; :func:`update_detail` also returns, for every posterior
component, which predicted component and which measurement produced it and
the log of its measurement likelihood. The IMF filter needs that bookkeeping
to score and fuse its per-model posteriors.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from .gauss import (
    GaussianMixtureIntensity,
    MeasurementModel,
    MotionModel,
    concat,
    gaussian_logpdf_chol,
    predict_batch,
    symmetrize,
    update_terms,
)


@dataclass(frozen=True)
class FilterParams:
    p_survive: float = 0.99
    p_detect: float = 0.98
    trunc_threshold: float = 1e-5
    merge_threshold: float = 4.0
    max_components: int = 100
    extract_threshold: float = 0.5
    joseph: bool = False

    def __post_init__(self):
        for name in ("p_survive", "p_detect"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be a probability, got {p}")
        for name in ("trunc_threshold", "merge_threshold", "extract_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_components < 1:
            raise ValueError("max_components must be at least 1")


@dataclass(frozen=True)
class BirthModel:
    intensity: GaussianMixtureIntensity

    def __post_init__(self):
        w = self.intensity.weights
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("birth weights must be positive and finite")


@dataclass(frozen=True)
class SpawnTerm:
    weight: float
    F: np.ndarray
    d: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        Q = symmetrize(np.atleast_2d(np.asarray(self.Q, dtype=float)))
        if np.linalg.eigvalsh(Q).min() < -1e-9:
            raise ValueError("spawn Q is not positive semidefinite")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float).reshape(F.shape[0]))


@dataclass(frozen=True)
class SpawnModel:
    terms: tuple[SpawnTerm, ...] = ()

    def __len__(self) -> int:
        return len(self.terms)


NO_SPAWN = SpawnModel()


@dataclass(frozen=True)
class ClutterModel:
    """Poisson clutter, uniform over an axis-aligned box in measurement space."""

    mean_count: float
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if self.mean_count < 0:
            raise ValueError("clutter mean count must be nonnegative")
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("clutter region must have positive volume")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def intensity(self, Z) -> np.ndarray:
        """kappa(z) for each row of ``Z``: mean_count / volume inside, 0 outside."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        inside = np.all((Z >= self.lower) & (Z <= self.upper), axis=1)
        return np.where(inside, self.mean_count / self.volume, 0.0)


class Estimate(NamedTuple):
    mean: np.ndarray
    cov: np.ndarray
    weight: float


def phd_predict(
    prior: GaussianMixtureIntensity,
    motion: MotionModel,
    spawn: SpawnModel,
    birth: BirthModel,
    params: FilterParams,
) -> GaussianMixtureIntensity:
    """Predicted intensity: survivals, then spawns (prior-major), then births."""
    if len(prior) and prior.dim != motion.dim:
        raise ValueError(f"prior dim {prior.dim} does not match motion dim {motion.dim}")
    m, P = predict_batch(prior.means, prior.covs, motion.F, motion.Q)
    parts = [GaussianMixtureIntensity(params.p_survive * prior.weights, m, P, motion.dim)]
    if len(spawn) and len(prior):
        ws, ms, Ps = [], [], []
        for term in spawn.terms:
            mb, Pb = predict_batch(prior.means, prior.covs, term.F, term.Q, term.d)
            ws.append(prior.weights * term.weight)
            ms.append(mb)
            Ps.append(Pb)
        # prior-major ordering: component i, then each spawn term
        parts.append(
            GaussianMixtureIntensity(
                np.stack(ws, axis=1).reshape(-1),
                np.stack(ms, axis=1).reshape(-1, motion.dim),
                np.stack(Ps, axis=1).reshape(-1, motion.dim, motion.dim),
                motion.dim,
            )
        )
    parts.append(birth.intensity)
    return concat(parts)


@dataclass(frozen=True)
class UpdateDetail:
    """Posterior intensity plus per-component provenance.

    Components are ordered missed-detection block first, then one block of
    ``J`` components per measurement in input order. ``meas_index`` is -1
    for missed-detection components, whose ``log_q`` is NaN.
    """

    posterior: GaussianMixtureIntensity
    source: np.ndarray
    meas_index: np.ndarray
    log_q: np.ndarray
    innovations: np.ndarray = field(repr=False)
    innovation_covs: np.ndarray = field(repr=False)


def update_detail(
    predicted: GaussianMixtureIntensity,
    meas: MeasurementModel,
    R,
    noise_mean,
    Z,
    clutter: ClutterModel,
    params: FilterParams,
) -> UpdateDetail:
    H = meas.H
    m_dim, n = H.shape
    R = np.atleast_2d(np.asarray(R, dtype=float))
    mu = np.broadcast_to(np.asarray(noise_mean, dtype=float), (m_dim,))
    Z = np.asarray(Z, dtype=float).reshape(-1, m_dim)
    J, M = len(predicted), Z.shape[0]
    pD = params.p_detect

    w_missed = (1.0 - pD) * predicted.weights
    src = np.tile(np.arange(J), M + 1)
    midx = np.repeat(np.arange(-1, M), J)
    if J == 0 or M == 0:
        post = GaussianMixtureIntensity(w_missed, predicted.means, predicted.covs, n)
        return UpdateDetail(
            post, src, midx, np.full(J, np.nan),
            np.zeros((J, m_dim)), np.zeros((J, m_dim, m_dim)),
        )

    S, chol, K, P_post = update_terms(predicted.covs, H, R, params.joseph)
    eta = predicted.means @ H.T + mu
    nu = Z[:, None, :] - eta[None]  # (M, J, m)
    log_q = gaussian_logpdf_chol(nu, chol[None])  # (M, J)
    m_post = predicted.means[None] + np.einsum("jnm,kjm->kjn", K, nu)

    kappa = clutter.intensity(Z)
    with np.errstate(divide="ignore"):
        log_num = np.log(pD) + np.log(predicted.weights)[None] + log_q
        log_den = logsumexp(
            np.concatenate([np.log(kappa)[:, None], log_num], axis=1), axis=1
        )
    w_det = np.zeros_like(log_num)
    ok = np.isfinite(log_den)
    w_det[ok] = np.exp(log_num[ok] - log_den[ok, None])

    post = GaussianMixtureIntensity(
        np.concatenate([w_missed, w_det.reshape(-1)]),
        np.concatenate([predicted.means, m_post.reshape(-1, n)]),
        np.concatenate([predicted.covs, np.broadcast_to(P_post, (M, J, n, n)).reshape(-1, n, n)]),
        n,
    )
    return UpdateDetail(
        posterior=post,
        source=src,
        meas_index=midx,
        log_q=np.concatenate([np.full(J, np.nan), log_q.reshape(-1)]),
        innovations=np.concatenate([np.zeros((J, m_dim)), nu.reshape(-1, m_dim)]),
        innovation_covs=np.concatenate([S, np.broadcast_to(S, (M, J, m_dim, m_dim)).reshape(-1, m_dim, m_dim)]),
    )


def phd_update(predicted, meas, R, noise_mean, Z, clutter, params) -> GaussianMixtureIntensity:
    return update_detail(predicted, meas, R, noise_mean, Z, clutter, params).posterior


def plan_reduction(v: GaussianMixtureIntensity, params: FilterParams) -> list[np.ndarray]:
    """Index groups that :func:`apply_reduction` should merge.

    Truncates weights below ``trunc_threshold``, then repeatedly takes the
    heaviest remaining component and groups every remaining component
    within squared Mahalanobis distance ``merge_threshold`` of it (measured
    with the candidate's own covariance). At most ``max_components`` groups
    are kept, heaviest merged weight first.
    """
    w = v.weights
    keep = np.flatnonzero(w >= params.trunc_threshold)
    if keep.size == 0:
        return []
    means = v.means[keep]
    inv = np.linalg.inv(v.covs[keep])
    remaining = np.arange(keep.size)
    groups = []
    while remaining.size:
        j = remaining[np.argmax(w[keep[remaining]])]
        d = means[remaining] - means[j]
        maha = np.einsum("ri,rik,rk->r", d, inv[remaining], d)
        sel = maha < params.merge_threshold
        sel[remaining == j] = True
        groups.append(keep[remaining[sel]])
        remaining = remaining[~sel]
    totals = np.array([w[g].sum() for g in groups])
    order = np.argsort(-totals, kind="stable")[: params.max_components]
    return [groups[i] for i in order]


def merge_group(weights, means, covs):
    """Moment-preserving merge of a set of weighted Gaussians."""
    W = weights.sum()
    a = weights / W if W > 0 else np.full(weights.size, 1.0 / weights.size)
    m = a @ means
    e = means - m
    P = np.einsum("g,gij->ij", a, covs) + np.einsum("g,gi,gj->ij", a, e, e)
    return W, m, symmetrize(P)


def apply_reduction(
    v: GaussianMixtureIntensity, groups: Sequence[np.ndarray], target_mass: float | None = None
) -> GaussianMixtureIntensity:
    if not groups:
        return GaussianMixtureIntensity.empty(v.dim)
    ws, ms, Ps = [], [], []
    for g in groups:
        if g.size == 1:
            i = g[0]
            ws.append(v.weights[i]); ms.append(v.means[i]); Ps.append(v.covs[i])
        else:
            W, m, P = merge_group(v.weights[g], v.means[g], v.covs[g])
            ws.append(W); ms.append(m); Ps.append(P)
    w = np.array(ws)
    total = w.sum()
    if target_mass is not None and total > 0:
        w = w * (target_mass / total)
    return GaussianMixtureIntensity(w, np.stack(ms), np.stack(Ps), v.dim)


def prune_and_merge(v: GaussianMixtureIntensity, params: FilterParams) -> GaussianMixtureIntensity:
    return apply_reduction(v, plan_reduction(v, params), v.mass)


def extract_states(v: GaussianMixtureIntensity, params: FilterParams) -> list[Estimate]:
    """Peaks with weight above ``extract_threshold``.

    A component heavier than 1.5 stands for several targets and is emitted
    ``round(w)`` times.
    """
    out = []
    for w, m, P in zip(v.weights, v.means, v.covs):
        if w > params.extract_threshold:
            reps = int(round(w)) if w > 1.5 else 1
            out.extend(Estimate(m.copy(), P.copy(), float(w)) for _ in range(reps))
    return out


def gmphd_step(
    prior: GaussianMixtureIntensity,
    motion: MotionModel,
    spawn: SpawnModel,
    birth: BirthModel,
    meas: MeasurementModel,
    R,
    noise_mean,
    Z,
    clutter: ClutterModel,
    params: FilterParams,
) -> tuple[GaussianMixtureIntensity, list[Estimate]]:
    predicted = phd_predict(prior, motion, spawn, birth, params)
    updated = phd_update(predicted, meas, R, noise_mean, Z, clutter, params)
    posterior = prune_and_merge(updated, params)
    return posterior, extract_states(posterior, params)


class FilterDivergenceError(ArithmeticError):
    """The filter produced non-finite weights, means or covariances."""


def check_finite(v: GaussianMixtureIntensity) -> None:
    if not (np.all(np.isfinite(v.weights)) and np.all(np.isfinite(v.means)) and np.all(np.isfinite(v.covs))):
        raise FilterDivergenceError("non-finite values in posterior intensity")


@dataclass(frozen=True)
class GmPhdFilter:
    """GM-PHD tracker with a single Gaussian measurement-noise term."""

    motion: MotionModel
    meas: MeasurementModel
    birth: BirthModel
    clutter: ClutterModel
    params: FilterParams
    R: np.ndarray
    noise_mean: np.ndarray
    spawn: SpawnModel = NO_SPAWN

    def initial(self) -> GaussianMixtureIntensity:
        return GaussianMixtureIntensity.empty(self.motion.dim)

    def step(self, state: GaussianMixtureIntensity, Z) -> tuple[GaussianMixtureIntensity, list[Estimate]]:
        post, est = gmphd_step(
            state, self.motion, self.spawn, self.birth, self.meas,
            self.R, self.noise_mean, Z, self.clutter, self.params,
        )
        check_finite(post)
        return post, est

    def run(self, measurement_sets) -> list[list[Estimate]]:
        state = self.initial()
        out = []
        for Z in measurement_sets:
            state, est = self.step(state, Z)
            out.append(est)
        return out
