"""Interacting-model fusion of per-noise-component GM-PHD filters.

One GM-PHD hypothesis is kept per (intensity component ``i``, noise model
``l``). Each step mixes the model-conditioned states through the Markov
switching matrix, runs a GM-PHD predict/update per noise model, rescores the
models per component from their innovation likelihoods, and fuses.

All per-model posteriors enumerate components in the same order (missed
detections, then one block per measurement), so component ``i`` refers to
the same hypothesis in every model. Pruning and merging are planned once on
the fused intensity and the same plan is applied to every model slice.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .gauss import GaussianMixtureIntensity, MeasurementModel, MotionModel, symmetrize
from .gmphd import (
    BirthModel,
    ClutterModel,
    Estimate,
    FilterParams,
    NO_SPAWN,
    SpawnModel,
    UpdateDetail,
    apply_reduction,
    check_finite,
    extract_states,
    phd_predict,
    plan_reduction,
    update_detail,
)
from .noise import NoiseMixtureModel, build_transition_matrix

UNDERFLOW = 1e-300


class DegenerateMixingError(ArithmeticError):
    pass


def validate_transition(trans) -> np.ndarray:
    p = np.atleast_2d(np.asarray(trans, dtype=float))
    if p.shape[0] != p.shape[1]:
        raise ValueError(f"transition matrix must be square, got {p.shape}")
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError("transition matrix must be row-stochastic")
    return p


@dataclass(frozen=True)
class ModelConditionedBank:
    """Per-component model probabilities and per-model Gaussian terms.

    ``probs`` has shape ``(J, L)``; ``weights``, ``means`` and ``covs`` are
    stacked model-major: ``(L, J)``, ``(L, J, n)``, ``(L, J, n, n)``.
    """

    probs: np.ndarray
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        sums = self.probs.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError("model probabilities must sum to 1 per component")

    @property
    def L(self) -> int:
        return self.probs.shape[1]

    @property
    def dim(self) -> int:
        return self.means.shape[-1]

    def __len__(self) -> int:
        return self.probs.shape[0]

    def slice(self, u: int) -> GaussianMixtureIntensity:
        return GaussianMixtureIntensity(self.weights[u], self.means[u], self.covs[u], self.dim)

    @classmethod
    def from_slices(cls, slices: Sequence[GaussianMixtureIntensity], probs) -> "ModelConditionedBank":
        n = slices[0].dim
        return cls(
            np.asarray(probs, dtype=float).reshape(len(slices[0]), len(slices)),
            np.stack([s.weights for s in slices]),
            np.stack([s.means for s in slices]).reshape(len(slices), -1, n),
            np.stack([s.covs for s in slices]).reshape(len(slices), -1, n, n),
        )


def init_bank(prior: GaussianMixtureIntensity, noise: NoiseMixtureModel) -> ModelConditionedBank:
    L = noise.L
    return ModelConditionedBank.from_slices([prior] * L, np.tile(noise.deltas, (len(prior), 1)))


@dataclass(frozen=True)
class MixedInputs:
    """Mixed per-model inputs; arrays are component-major ``(J, L, ...)``."""

    cbar: np.ndarray
    mix: np.ndarray  # (J, L_from, L_to)
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def prior_for(self, u: int) -> GaussianMixtureIntensity:
        n = self.means.shape[-1]
        return GaussianMixtureIntensity(self.weights[:, u], self.means[:, u], self.covs[:, u], n)


def mix_inputs(bank: ModelConditionedBank, trans) -> MixedInputs:
    trans = validate_transition(trans)
    if trans.shape[0] != bank.L:
        raise ValueError(f"transition matrix is {trans.shape}, bank has L={bank.L}")
    probs = bank.probs
    cbar = probs @ trans  # c_u = sum_l P[l,u] theta_l
    if np.any(cbar <= 0):
        raise DegenerateMixingError("zero mixing normalizer")
    mix = trans[None] * probs[:, :, None] / cbar[:, None, :]
    w = np.einsum("lj,jlu->ju", bank.weights, mix)
    m = np.einsum("jlu,lji->jui", mix, bank.means)
    e = bank.means.transpose(1, 0, 2)[:, :, None, :] - m[:, None, :, :]  # (J, l, u, n)
    P = np.einsum("jlu,ljab->juab", mix, bank.covs) + np.einsum("jlu,jlua,jlub->juab", mix, e, e)
    return MixedInputs(cbar, mix, w, m, symmetrize(P))


@dataclass(frozen=True)
class PerModelPosterior:
    detail: UpdateDetail
    cbar: np.ndarray  # mixing normalizer of the component each posterior term came from


def per_model_step(
    mixed: MixedInputs,
    u: int,
    noise: NoiseMixtureModel,
    motion: MotionModel,
    spawn: SpawnModel,
    birth: BirthModel,
    meas: MeasurementModel,
    Z,
    clutter: ClutterModel,
    params: FilterParams,
    trans=None,
) -> PerModelPosterior:
    """GM-PHD predict and update for noise model ``u``, without pruning.

    Birth components carry the normalizer implied by model probabilities
    equal to the noise weights.
    """
    trans = build_transition_matrix(noise) if trans is None else np.asarray(trans, dtype=float)
    term = noise.components[u]
    predicted = phd_predict(mixed.prior_for(u), motion, spawn, birth, params)
    J = mixed.cbar.shape[0]
    birth_cbar = float(noise.deltas @ trans[:, u])
    cbar_pred = np.concatenate([
        mixed.cbar[:, u],
        np.repeat(mixed.cbar[:, u], len(spawn)) if J else np.zeros(0),
        np.full(len(birth.intensity), birth_cbar),
    ])
    detail = update_detail(predicted, meas, term.R, term.mu, Z, clutter, params)
    return PerModelPosterior(detail, cbar_pred[detail.source])


@dataclass(frozen=True)
class ModelLikelihoods:
    """Per-component model likelihoods, held as logs; shape ``(K, L)``."""

    log_values: np.ndarray
    cbar: np.ndarray

    @classmethod
    def from_values(cls, values, cbar) -> "ModelLikelihoods":
        with np.errstate(divide="ignore"):
            return cls(np.log(np.asarray(values, dtype=float)), np.asarray(cbar, dtype=float))

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)


def model_likelihoods(posteriors: Sequence[PerModelPosterior]) -> ModelLikelihoods:
    """Lambda = cbar * N(innovation; 0, S); missed detections get Lambda = cbar."""
    cbar = np.stack([p.cbar for p in posteriors], axis=1)
    log_q = np.stack([p.detail.log_q for p in posteriors], axis=1)
    with np.errstate(divide="ignore"):
        log_lam = np.log(cbar) + np.where(np.isnan(log_q), 0.0, log_q)
    return ModelLikelihoods(log_lam, cbar)


def update_model_probs(lik: ModelLikelihoods) -> np.ndarray:
    """Normalize likelihoods per component.

    Normalization runs in log space. When the summed likelihood of a
    component is below 1e-300 the probabilities fall back to the mixing
    normalizers, renormalized.
    """
    log_lam = np.atleast_2d(lik.log_values)
    cbar = np.atleast_2d(lik.cbar)
    total = logsumexp(log_lam, axis=1)
    degenerate = ~(total >= np.log(UNDERFLOW))
    probs = np.empty_like(log_lam)
    ok = ~degenerate
    probs[ok] = np.exp(log_lam[ok] - total[ok, None])
    probs[ok] /= probs[ok].sum(axis=1, keepdims=True)
    if np.any(degenerate):
        c = cbar[degenerate]
        probs[degenerate] = c / c.sum(axis=1, keepdims=True)
    return probs


def fuse(slices: Sequence[GaussianMixtureIntensity], probs) -> GaussianMixtureIntensity:
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    n = slices[0].dim
    w = np.stack([s.weights for s in slices])  # (L, K)
    m = np.stack([s.means for s in slices]).reshape(len(slices), -1, n)
    P = np.stack([s.covs for s in slices]).reshape(len(slices), -1, n, n)
    wf = np.einsum("ku,uk->k", probs, w)
    mf = np.einsum("ku,uki->ki", probs, m)
    e = m - mf[None]
    Pf = np.einsum("ku,ukab->kab", probs, P) + np.einsum("ku,uka,ukb->kab", probs, e, e)
    return GaussianMixtureIntensity(wf, mf, Pf, n)


def _reduce_bank(slices, probs, fused, params) -> ModelConditionedBank | None:
    groups = plan_reduction(fused, params)
    if not groups:
        return None
    reduced = [apply_reduction(s, groups, s.mass) for s in slices]
    w = fused.weights
    new_probs = np.empty((len(groups), probs.shape[1]))
    for k, g in enumerate(groups):
        if g.size == 1:
            new_probs[k] = probs[g[0]]
            continue
        W = w[g].sum()
        a = w[g] / W if W > 0 else np.full(g.size, 1.0 / g.size)
        row = a @ probs[g]
        new_probs[k] = row / row.sum()
    return ModelConditionedBank.from_slices(reduced, new_probs)


def imf_gmphd_step(
    bank: ModelConditionedBank,
    trans,
    noise: NoiseMixtureModel,
    motion: MotionModel,
    spawn: SpawnModel,
    birth: BirthModel,
    meas: MeasurementModel,
    Z,
    clutter: ClutterModel,
    params: FilterParams,
) -> tuple[ModelConditionedBank, GaussianMixtureIntensity, list[Estimate]]:
    mixed = mix_inputs(bank, trans)
    posts = [
        per_model_step(mixed, u, noise, motion, spawn, birth, meas, Z, clutter, params, trans)
        for u in range(noise.L)
    ]
    probs = update_model_probs(model_likelihoods(posts))
    slices = [p.detail.posterior for p in posts]
    fused_full = fuse(slices, probs)
    new_bank = _reduce_bank(slices, probs, fused_full, params)
    if new_bank is None:
        empty = GaussianMixtureIntensity.empty(motion.dim)
        return init_bank(empty, noise), empty, []
    fused = fuse([new_bank.slice(u) for u in range(new_bank.L)], new_bank.probs)
    return new_bank, fused, extract_states(fused, params)


@dataclass(frozen=True)
class ImfGmPhdFilter:
    """IMF-GM-PHD tracker; ``trans`` defaults to the noise-weight switching matrix."""

    motion: MotionModel
    meas: MeasurementModel
    birth: BirthModel
    clutter: ClutterModel
    params: FilterParams
    noise: NoiseMixtureModel
    spawn: SpawnModel = NO_SPAWN
    trans: np.ndarray | None = None

    def __post_init__(self):
        trans = build_transition_matrix(self.noise) if self.trans is None else self.trans
        trans = validate_transition(trans)
        if trans.shape[0] != self.noise.L:
            raise ValueError("transition matrix size must equal the number of noise terms")
        object.__setattr__(self, "trans", trans)

    def initial(self) -> ModelConditionedBank:
        return init_bank(GaussianMixtureIntensity.empty(self.motion.dim), self.noise)

    def step(self, bank: ModelConditionedBank, Z):
        bank, fused, est = imf_gmphd_step(
            bank, self.trans, self.noise, self.motion, self.spawn, self.birth,
            self.meas, Z, self.clutter, self.params,
        )
        check_finite(fused)
        return bank, fused, est

    def run(self, measurement_sets) -> list[list[Estimate]]:
        bank = self.initial()
        out = []
        for Z in measurement_sets:
            bank, _, est = self.step(bank, Z)
            out.append(est)
        return out
