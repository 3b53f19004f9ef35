"""Independent reference implementations used as test oracles."""
import numpy as np

from imfphd.gauss import GaussianMixtureIntensity, MeasurementModel, MotionModel
from imfphd.gmphd import BirthModel, ClutterModel, FilterParams, SpawnModel, SpawnTerm
from imfphd.noise import NoiseMixtureModel
from imfphd.scenario import ScenarioConfig, TargetScript

from conftest import random_spd


def plain_kalman(x0, P0, F, Q, H, R, zs):
    """Textbook Kalman filter, predict then update, written out longhand."""
    x, P = np.array(x0, dtype=float), np.array(P0, dtype=float)
    for z in zs:
        x = F @ x
        P = F @ P @ F.T + Q
        S = H @ P @ H.T + R
        K = P @ H.T @ np.linalg.inv(S)
        x = x + K @ (z - H @ x)
        P = (np.eye(len(x)) - K @ H) @ P
    return x, P


def greedy_merge_reference(w, m, P, trunc, U, Jmax):
    """Loop-by-loop greedy prune/merge, mass rescaled to the input total."""
    I = [i for i in range(len(w)) if w[i] >= trunc]
    out = []
    while I:
        j = max(I, key=lambda i: (w[i], -i))
        Lset = [i for i in I if (m[i] - m[j]) @ np.linalg.inv(P[i]) @ (m[i] - m[j]) < U or i == j]
        W = sum(w[i] for i in Lset)
        mm = sum(w[i] * m[i] for i in Lset) / W
        PP = sum(w[i] * (P[i] + np.outer(mm - m[i], mm - m[i])) for i in Lset) / W
        out.append((W, mm, PP))
        I = [i for i in I if i not in Lset]
    out.sort(key=lambda t: -t[0])
    out = out[:Jmax]
    if out:
        scale = sum(w) / sum(t[0] for t in out)
        out = [(t[0] * scale, t[1], t[2]) for t in out]
    return out


def random_intensity(rng, J, n=4, spread=50.0):
    if J == 0:
        return GaussianMixtureIntensity.empty(n)
    return GaussianMixtureIntensity(
        rng.uniform(0.001, 1.0, J),
        rng.uniform(-spread, spread, (J, n)),
        np.stack([random_spd(rng, n, rng.uniform(0.1, 5)) for _ in range(J)]).reshape(J, n, n),
        n,
    )


def random_models(rng, with_spawn=True):
    motion = MotionModel.constant_velocity(1.0, rng.uniform(0.01, 1.0, 4))
    meas = MeasurementModel([[1, 0, 0, 0], [0, 0, 1, 0]])
    birth = BirthModel(random_intensity(rng, int(rng.integers(0, 4))))
    spawn = SpawnModel((SpawnTerm(float(rng.uniform(0.01, 0.2)), np.eye(4), rng.normal(size=4), np.eye(4)),)) \
        if with_spawn else SpawnModel()
    clutter = ClutterModel(float(rng.uniform(0.5, 20)), [-100, -100], [100, 100])
    params = FilterParams(p_survive=float(rng.uniform(0.5, 1.0)), p_detect=float(rng.uniform(0.5, 0.99)))
    return motion, meas, birth, spawn, clutter, params


def small_scenario(seed=0, steps=30, noise=None, clutter_rate=5.0, p_detect=0.95):
    motion = MotionModel.constant_velocity(1.0, [0.01, 0.1, 0.01, 0.1])
    meas = MeasurementModel([[1, 0, 0, 0], [0, 0, 1, 0]])
    noise = noise or NoiseMixtureModel.gaussian(4.0 * np.eye(2))
    targets = (
        TargetScript(1, steps, [20, 1.0, 30, 1.0]),
        TargetScript(5, steps, [150, -1.0, 60, 0.5]),
    )
    return ScenarioConfig(steps, 1.0, targets, motion, meas, noise,
                          ClutterModel(clutter_rate, [0, 0], [200, 200]), p_detect, seed=seed)
