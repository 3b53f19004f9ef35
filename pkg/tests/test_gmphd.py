import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imfphd.config import scenario_birth
from imfphd.gauss import GaussianMixtureIntensity, MeasurementModel, MotionModel
from imfphd.gmphd import (
    BirthModel,
    ClutterModel,
    FilterParams,
    GmPhdFilter,
    SpawnModel,
    SpawnTerm,
    extract_states,
    phd_predict,
    phd_update,
    plan_reduction,
    prune_and_merge,
    update_detail,
)
from imfphd.scenario import paper_scenario, simulate

from helpers import greedy_merge_reference, plain_kalman, random_intensity, random_models, small_scenario

MEAS = MeasurementModel([[1.0]])
SCALAR_MOTION = MotionModel([[1.0]], [[1.0]])


def one(w, m, P):
    return GaussianMixtureIntensity([w], [[m]], [[[P]]], 1)


def test_predict_mass_example():
    prior = GaussianMixtureIntensity([0.5, 1.5], [[0.0], [1.0]], [[[1.0]], [[1.0]]], 1)
    birth = BirthModel(one(0.1, 0.0, 1.0))
    spawn = SpawnModel((SpawnTerm(0.05, [[1.0]], [0.0], [[1.0]]),))
    out = phd_predict(prior, SCALAR_MOTION, spawn, birth, FilterParams(p_survive=0.9))
    assert out.mass == pytest.approx(0.9 * 2.0 + 0.05 * 2.0 + 0.1)
    assert len(out) == 2 + 2 + 1


def test_empty_prior_predicts_birth_only():
    birth = BirthModel(one(0.1, 3.0, 2.0))
    out = phd_predict(GaussianMixtureIntensity.empty(1), SCALAR_MOTION, SpawnModel(), birth, FilterParams())
    assert len(out) == 1 and out.weights[0] == 0.1


def test_empty_measurements_scale_by_missed_detection():
    pred = GaussianMixtureIntensity([0.4, 0.6], [[0.0], [5.0]], [[[1.0]], [[2.0]]], 1)
    out = phd_update(pred, MEAS, [[1.0]], 0.0, np.zeros((0, 1)), ClutterModel(1.0, [-10], [10]),
                     FilterParams(p_detect=0.9))
    np.testing.assert_allclose(out.weights, [0.04, 0.06])
    np.testing.assert_array_equal(out.means, pred.means)


def test_single_component_without_clutter():
    pred = one(1.0, 0.0, 1.0)
    params = FilterParams(p_detect=0.9)
    out = phd_update(pred, MEAS, [[1.0]], 0.0, [[0.5]], ClutterModel(0.0, [-10], [10]), params)
    # kappa = 0 makes the single detection term weight exactly 1
    np.testing.assert_allclose(out.weights, [0.1, 1.0])
    assert out.mass == pytest.approx(1.0 * (1 - 0.9) + 1.0)


def test_update_example_with_clutter():
    pred = one(1.0, 0.0, 1.0)
    clutter = ClutterModel(2.0, [-10], [10])  # kappa = 0.1
    out = phd_update(pred, MEAS, [[1.0]], 0.0, [[0.0]], clutter, FilterParams(p_detect=0.5))
    q = 1 / np.sqrt(4 * np.pi)
    assert out.weights[1] == pytest.approx(0.5 * q / (0.1 + 0.5 * q), rel=1e-12)
    assert out.means[1, 0] == 0.0 and out.covs[1, 0, 0] == pytest.approx(0.5)


def test_update_component_ordering():
    pred = GaussianMixtureIntensity([0.5, 0.5], [[0.0], [10.0]], [[[1.0]], [[1.0]]], 1)
    d = update_detail(pred, MEAS, [[1.0]], 0.0, [[0.0], [10.0], [3.0]], ClutterModel(1.0, [-20], [20]),
                      FilterParams())
    assert d.meas_index.tolist() == [-1, -1, 0, 0, 1, 1, 2, 2]
    assert d.source.tolist() == [0, 1] * 4
    assert np.all(np.isnan(d.log_q[:2])) and np.all(np.isfinite(d.log_q[2:]))


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_detection_weights_below_one(seed):
    rng = np.random.default_rng(seed)
    motion, meas, birth, spawn, clutter, params = random_models(rng)
    pred = phd_predict(random_intensity(rng, int(rng.integers(1, 6))), motion, spawn, birth, params)
    Z = rng.uniform(-100, 100, (int(rng.integers(1, 6)), 2))
    d = update_detail(pred, meas, np.eye(2), 0.0, Z, clutter, params)
    w = d.posterior.weights
    for k in range(len(Z)):
        assert w[d.meas_index == k].sum() < 1.0


def test_prune_merge_examples():
    params = FilterParams()
    # two identical components merge, a light one is truncated
    v = GaussianMixtureIntensity([0.4, 0.4, 1e-6], [[0.0], [0.0], [50.0]], [[[1.0]]] * 3, 1)
    out = prune_and_merge(v, params)
    assert len(out) == 1
    assert out.weights[0] == pytest.approx(0.4 + 0.4 + 1e-6)
    # squared distance exactly at the threshold stays separate
    v = GaussianMixtureIntensity([0.5, 0.3], [[0.0], [2.0]], [[[1.0]]] * 2, 1)
    assert len(prune_and_merge(v, params)) == 2
    v = GaussianMixtureIntensity([0.5, 0.3], [[0.0], [1.9]], [[[1.0]]] * 2, 1)
    out = prune_and_merge(v, params)
    assert len(out) == 1
    assert out.means[0, 0] == pytest.approx(0.3 * 1.9 / 0.8)
    assert out.covs[0, 0, 0] == pytest.approx(1.0 + (0.5 * 0.3 / 0.8**2) * 1.9**2)


def test_prune_caps_component_count():
    v = GaussianMixtureIntensity(np.linspace(0.01, 1, 150), np.arange(150.0)[:, None] * 100, np.ones((150, 1, 1)), 1)
    out = prune_and_merge(v, FilterParams())
    assert len(out) == 100
    assert out.mass == pytest.approx(v.mass)
    assert out.weights.min() > 0.3  # the 100 heaviest survive


def test_prune_all_truncated_gives_empty():
    v = GaussianMixtureIntensity([1e-7, 1e-8], [[0.0], [1.0]], [[[1.0]]] * 2, 1)
    assert len(prune_and_merge(v, FilterParams())) == 0


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_prune_merge_matches_reference(seed):
    rng = np.random.default_rng(seed)
    J = int(rng.integers(1, 25))
    v = random_intensity(rng, J, n=2, spread=8.0)
    w = v.weights.copy()
    w[rng.random(J) < 0.2] = 1e-6
    v = GaussianMixtureIntensity(w, v.means, v.covs, 2)
    params = FilterParams(max_components=8)
    out = prune_and_merge(v, params)
    ref = greedy_merge_reference(list(v.weights), list(v.means), list(v.covs), 1e-5, 4.0, 8)
    assert len(out) == len(ref)
    for k, (W, m, P) in enumerate(ref):
        assert out.weights[k] == pytest.approx(W, rel=1e-9)
        np.testing.assert_allclose(out.means[k], m, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(out.covs[k], P, rtol=1e-8, atol=1e-9)


def test_plan_groups_are_disjoint(rng):
    v = random_intensity(rng, 40, n=2, spread=5.0)
    groups = plan_reduction(v, FilterParams())
    idx = np.concatenate(groups)
    assert len(idx) == len(set(idx.tolist()))


def test_extract_examples():
    params = FilterParams()
    v = GaussianMixtureIntensity([0.4, 0.6, 1.6, 2.4, 3.6], np.arange(5.0)[:, None], np.ones((5, 1, 1)), 1)
    est = extract_states(v, params)
    assert [float(e.mean[0]) for e in est] == [1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 4.0, 4.0]
    # weight 1.5 is not above 1.5, so it yields one estimate
    assert len(extract_states(GaussianMixtureIntensity([1.5], [[0.0]], [[[1.0]]], 1), params)) == 1
    assert extract_states(GaussianMixtureIntensity([0.5], [[0.0]], [[[1.0]]], 1), params) == []


def test_single_target_matches_plain_kalman():
    motion = MotionModel.constant_velocity(1.0, [0.01, 0.1, 0.01, 0.1])
    meas = MeasurementModel([[1, 0, 0, 0], [0, 0, 1, 0]])
    R = 4.0 * np.eye(2)
    x0 = np.array([10.0, 1.0, 20.0, -1.0])
    P0 = np.diag([25.0, 4.0, 25.0, 4.0])
    truth = [x0]
    for _ in range(5):
        truth.append(motion.F @ truth[-1])
    zs = [meas.H @ x for x in truth[1:]]
    birth = BirthModel(GaussianMixtureIntensity([1e-9], [x0], [P0], 4))
    flt = GmPhdFilter(motion, meas, birth, ClutterModel(0.0, [-500, -500], [500, 500]),
                      FilterParams(p_survive=1.0, p_detect=1.0), R, np.zeros(2))
    # start from the exact prior, then birth is negligible noise below truncation
    state = GaussianMixtureIntensity([1.0], [x0], [P0], 4)
    for z in zs:
        state, est = flt.step(state, z[None])
    x_ref, P_ref = plain_kalman(x0, P0, motion.F, motion.Q, meas.H, R, zs)
    assert len(est) == 1
    np.testing.assert_allclose(est[0].mean, x_ref, atol=1e-6)
    np.testing.assert_allclose(est[0].cov, P_ref, atol=1e-6)


def test_tracks_small_scene():
    sc = small_scenario(seed=3, steps=40)
    frames = simulate(sc)
    flt = GmPhdFilter(sc.motion, sc.meas, scenario_birth(sc), sc.clutter,
                      FilterParams(p_detect=sc.p_detect), sc.noise.components[0].R, np.zeros(2))
    est = flt.run([f.measurements for f in frames])
    counts = np.array([len(e) for e in est[10:]])
    # GM-PHD drops a track for a frame after most missed detections
    assert np.mean(counts == 2) > 0.6
    assert 1.5 < counts.mean() < 2.5


def test_paper_scene_runs_without_divergence():
    sc = paper_scenario(seed=1)
    frames = simulate(sc)
    R = sc.noise.moment_matched().components[0].R
    flt = GmPhdFilter(sc.motion, sc.meas, scenario_birth(sc), sc.clutter, FilterParams(), R, np.zeros(2))
    est = flt.run([f.measurements for f in frames])
    assert len(est) == 100
    assert all(np.all(np.isfinite(e.mean)) for frame in est for e in frame)
