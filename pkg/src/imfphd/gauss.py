"""Gaussian densities, weighted mixtures and linear-Gaussian predict/update.

Everything here is a value type or a pure function. Mixtures are stored as
stacked arrays (weights ``(J,)``, means ``(J, n)``, covs ``(J, n, n)``) so the
filters can work on whole intensities at once; :class:`GaussianComponent` is
the single-term view used at API boundaries.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

LOG_2PI = np.log(2.0 * np.pi)
SYM_TOL = 1e-9
PSD_TOL = 1e-9


class SingularCovarianceError(np.linalg.LinAlgError):
    """A covariance could not be factorized even after diagonal jitter."""


class SingularInnovationError(SingularCovarianceError):
    """Innovation covariance ``H P H^T + R`` is singular."""


def symmetrize(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def safe_cholesky(cov: np.ndarray, error=SingularCovarianceError) -> np.ndarray:
    """Lower Cholesky factor of ``cov`` (batched over leading axes).

    On failure a jitter of ``1e-9 * trace / dim`` is added to the diagonal
    of every matrix in the batch and the factorization retried once.
    """
    cov = symmetrize(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    d = cov.shape[-1]
    scale = np.trace(cov, axis1=-2, axis2=-1) / d
    jitter = 1e-9 * np.abs(scale)[..., None, None] * np.eye(d)
    try:
        return np.linalg.cholesky(cov + jitter)
    except np.linalg.LinAlgError as exc:
        raise error(f"covariance is not positive definite: {exc}") from None


def psd_sqrt(R: np.ndarray) -> np.ndarray:
    """A matrix ``A`` with ``A A^T = R`` for symmetric PSD ``R`` (eigen route)."""
    vals, vecs = np.linalg.eigh(symmetrize(R))
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _solve_lower(chol: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``chol @ x = b`` for lower-triangular ``chol`` (batched)."""
    # scipy's solve_triangular does not broadcast over batch axes
    return np.linalg.solve(chol, b)


def gaussian_logpdf_chol(e: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """Log density of residuals ``e`` under ``N(0, L L^T)``.

    ``e`` has shape ``(..., m)`` and ``chol`` shape ``(..., m, m)``, with the
    leading axes broadcasting against each other.
    """
    m = chol.shape[-1]
    e = np.asarray(e, dtype=float)
    chol_b, e_b = np.broadcast_arrays(chol, e[..., None])
    y = _solve_lower(chol_b, e_b)[..., 0]
    maha = np.sum(y * y, axis=-1)
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    return -0.5 * (m * LOG_2PI + logdet + maha)


def gaussian_logpdf(x, mean, cov) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if x.shape != mean.shape or cov.shape != (x.size, x.size):
        raise ValueError(
            f"dimension mismatch: x{x.shape}, mean{mean.shape}, cov{cov.shape}"
        )
    return float(gaussian_logpdf_chol(x - mean, safe_cholesky(cov)))


def gaussian_pdf(x, mean, cov) -> float:
    """Multivariate normal density, evaluated through a Cholesky factor.

    Scalars are accepted for one-dimensional cases. The density is
    accumulated in log space and exponentiated last.

    >>> round(gaussian_pdf(0.0, 0.0, 1.0), 5)
    0.39894
    """
    return float(np.exp(gaussian_logpdf(x, mean, cov)))


@dataclass(frozen=True)
class GaussianComponent:
    """One weighted Gaussian term ``w N(x; m, P)`` of an intensity."""

    weight: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        cov = symmetrize(np.atleast_2d(np.asarray(self.cov, dtype=float)))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"mean dim {mean.size} does not match cov {cov.shape}")
        if not self.weight >= 0:
            raise ValueError(f"weight must be nonnegative, got {self.weight}")
        if np.linalg.eigvalsh(cov).min() < -PSD_TOL:
            raise ValueError("covariance is not positive semidefinite")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class GaussianMixtureIntensity:
    """Weighted Gaussian mixture; the total weight is the expected target count."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    dim: int = field(default=-1)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        dim = self.dim
        if dim < 0:
            dim = np.shape(self.means)[-1] if np.size(self.means) else 0
        m = np.asarray(self.means, dtype=float).reshape(w.size, dim)
        P = symmetrize(np.asarray(self.covs, dtype=float).reshape(w.size, dim, dim))
        if np.any(w < 0):
            raise ValueError("mixture weights must be nonnegative")
        for a in (w, m, P):
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", P)
        object.__setattr__(self, "dim", int(dim))

    @classmethod
    def empty(cls, dim: int) -> "GaussianMixtureIntensity":
        return cls(np.zeros(0), np.zeros((0, dim)), np.zeros((0, dim, dim)), dim)

    @classmethod
    def from_components(
        cls, components: Iterable[GaussianComponent], dim: int | None = None
    ) -> "GaussianMixtureIntensity":
        comps = list(components)
        if not comps:
            if dim is None:
                raise ValueError("dim is required for an empty mixture")
            return cls.empty(dim)
        d = comps[0].dim
        if any(c.dim != d for c in comps):
            raise ValueError("all components must share a dimension")
        return cls(
            np.array([c.weight for c in comps]),
            np.stack([c.mean for c in comps]),
            np.stack([c.cov for c in comps]),
            d,
        )

    @property
    def components(self) -> list[GaussianComponent]:
        return [GaussianComponent(w, m, P) for w, m, P in zip(self.weights, self.means, self.covs)]

    def __len__(self) -> int:
        return self.weights.size

    def __add__(self, other: "GaussianMixtureIntensity") -> "GaussianMixtureIntensity":
        return concat([self, other])

    def scaled(self, factor: float) -> "GaussianMixtureIntensity":
        return GaussianMixtureIntensity(self.weights * factor, self.means, self.covs, self.dim)

    def take(self, idx) -> "GaussianMixtureIntensity":
        idx = np.asarray(idx, dtype=int)
        return GaussianMixtureIntensity(self.weights[idx], self.means[idx], self.covs[idx], self.dim)

    @property
    def mass(self) -> float:
        return mixture_mass(self)


def concat(parts: Sequence[GaussianMixtureIntensity]) -> GaussianMixtureIntensity:
    parts = list(parts)
    dims = {p.dim for p in parts if len(p)}
    if len(dims) > 1:
        raise ValueError(f"cannot concatenate mixtures of dims {sorted(dims)}")
    dim = dims.pop() if dims else parts[0].dim
    return GaussianMixtureIntensity(
        np.concatenate([p.weights for p in parts]),
        np.concatenate([p.means.reshape(-1, dim) for p in parts]),
        np.concatenate([p.covs.reshape(-1, dim, dim) for p in parts]),
        dim,
    )


def mixture_mass(v: GaussianMixtureIntensity) -> float:
    return float(np.sum(v.weights))


@dataclass(frozen=True)
class MotionModel:
    F: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        Q = symmetrize(np.atleast_2d(np.asarray(self.Q, dtype=float)))
        if F.shape[0] != F.shape[1] or Q.shape != F.shape:
            raise ValueError(f"F {F.shape} must be square and match Q {Q.shape}")
        if np.linalg.eigvalsh(Q).min() < -PSD_TOL:
            raise ValueError("Q is not positive semidefinite")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Q", Q)

    @classmethod
    def constant_velocity(cls, dt: float, q_diag) -> "MotionModel":
        """2-D constant velocity on state ``(x, vx, y, vy)``."""
        block = np.array([[1.0, dt], [0.0, 1.0]])
        F = np.kron(np.eye(2), block)
        return cls(F, np.diag(np.asarray(q_diag, dtype=float)))

    @property
    def dim(self) -> int:
        return self.F.shape[0]


@dataclass(frozen=True)
class MeasurementModel:
    H: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "H", np.atleast_2d(np.asarray(self.H, dtype=float)))

    @property
    def meas_dim(self) -> int:
        return self.H.shape[0]

    @property
    def state_dim(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class KalmanUpdateResult:
    posterior_mean: np.ndarray
    posterior_cov: np.ndarray
    innovation: np.ndarray
    innovation_cov: np.ndarray
    gain: np.ndarray
    predicted_likelihood: float


def kalman_predict(comp: GaussianComponent, motion: MotionModel) -> GaussianComponent:
    if comp.dim != motion.dim:
        raise ValueError(f"state dim {comp.dim} does not match motion dim {motion.dim}")
    F = motion.F
    return GaussianComponent(comp.weight, F @ comp.mean, motion.Q + F @ comp.cov @ F.T)


def predict_batch(means, covs, F, Q, offset=None):
    """Propagate stacked means/covs through ``x' = F x (+ offset)``."""
    m = means @ F.T
    if offset is not None:
        m = m + offset
    P = symmetrize(Q + F @ covs @ F.T)
    return m, P


def update_terms(covs, H, R, joseph=False):
    """Measurement-independent pieces of the Kalman update for stacked covs.

    Returns ``(S, chol_S, K, P_post)``; ``P_post`` uses ``(I - K H) P`` unless
    ``joseph`` is set.
    """
    S = symmetrize(H @ covs @ H.T + R)
    chol = safe_cholesky(S, error=SingularInnovationError)
    PHt = covs @ H.T
    # K = P H^T S^-1 via two triangular solves on the transposed system
    Kt = np.linalg.solve(np.swapaxes(chol, -1, -2), np.linalg.solve(chol, np.swapaxes(PHt, -1, -2)))
    K = np.swapaxes(Kt, -1, -2)
    n = covs.shape[-1]
    IKH = np.eye(n) - K @ H
    if joseph:
        P_post = IKH @ covs @ np.swapaxes(IKH, -1, -2) + K @ R @ np.swapaxes(K, -1, -2)
    else:
        P_post = IKH @ covs
    return S, chol, K, symmetrize(P_post)


def kalman_update(
    comp: GaussianComponent,
    meas: MeasurementModel,
    R,
    noise_mean,
    z,
    joseph: bool = False,
) -> KalmanUpdateResult:
    """Kalman update of one component against one measurement.

    The innovation subtracts ``noise_mean`` so nonzero-mean noise terms are
    handled; with zero-mean noise this is the textbook update.
    """
    H = meas.H
    R = symmetrize(np.atleast_2d(np.asarray(R, dtype=float)))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    mu = np.broadcast_to(np.asarray(noise_mean, dtype=float), z.shape)
    if H.shape[1] != comp.dim or R.shape != (H.shape[0],) * 2 or z.size != H.shape[0]:
        raise ValueError("dimension mismatch in kalman_update")
    S, chol, K, P_post = update_terms(comp.cov, H, R, joseph)
    nu = z - H @ comp.mean - mu
    lik = float(np.exp(gaussian_logpdf_chol(nu, chol)))
    return KalmanUpdateResult(
        posterior_mean=comp.mean + K @ nu,
        posterior_cov=P_post,
        innovation=nu,
        innovation_cov=S,
        gain=K,
        predicted_likelihood=lik,
    )
