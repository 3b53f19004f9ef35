import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad
from scipy.stats import multivariate_normal

from imfphd.gauss import (
    GaussianComponent,
    GaussianMixtureIntensity,
    MeasurementModel,
    MotionModel,
    SingularInnovationError,
    gaussian_pdf,
    kalman_predict,
    kalman_update,
    mixture_mass,
    safe_cholesky,
)

from conftest import random_spd


def test_standard_normal_at_zero():
    assert gaussian_pdf(0.0, 0.0, 1.0) == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-12)


def test_scalar_pdf_matches_closed_form():
    # N(3; 0, 4) = exp(-9/8) / sqrt(8 pi)
    assert gaussian_pdf(3.0, 0.0, 4.0) == pytest.approx(np.exp(-9 / 8) / np.sqrt(8 * np.pi), rel=1e-12)


def test_pdf_matches_scipy_in_4d(rng):
    for _ in range(20):
        P = random_spd(rng, 4)
        m = rng.normal(size=4)
        x = rng.normal(size=4)
        assert gaussian_pdf(x, m, P) == pytest.approx(multivariate_normal(m, P).pdf(x), rel=1e-10)


@pytest.mark.parametrize("var", [0.01, 1.0, 100.0])
def test_pdf_integrates_to_one(var):
    s = np.sqrt(var)
    total, _ = quad(lambda x: gaussian_pdf(x, 0.0, var), -12 * s, 12 * s, points=[0.0])
    assert total == pytest.approx(1.0, abs=1e-3)


def test_pdf_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        gaussian_pdf([0.0, 0.0], [0.0], np.eye(2))


def test_component_validation():
    with pytest.raises(ValueError):
        GaussianComponent(-1.0, [0.0], [[1.0]])
    with pytest.raises(ValueError):
        GaussianComponent(1.0, [0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]])
    c = GaussianComponent(1.0, [0.0, 0.0], [[1.0, 0.5 + 1e-12], [0.5, 1.0]])
    np.testing.assert_array_equal(c.cov, c.cov.T)


def test_scalar_predict_example():
    motion = MotionModel([[1.0]], [[0.5]])
    out = kalman_predict(GaussianComponent(0.7, [2.0], [[1.0]]), motion)
    assert out.weight == 0.7
    assert out.mean[0] == 2.0
    assert out.cov[0, 0] == pytest.approx(1.5)


def test_scalar_update_example():
    # prior N(0, 1), R = 1, z = 2: K = 0.5, m = 1, P = 0.5, q = N(2; 0, 2)
    res = kalman_update(GaussianComponent(1.0, [0.0], [[1.0]]), MeasurementModel([[1.0]]), [[1.0]], 0.0, [2.0])
    assert res.posterior_mean[0] == pytest.approx(1.0)
    assert res.posterior_cov[0, 0] == pytest.approx(0.5)
    assert res.gain[0, 0] == pytest.approx(0.5)
    assert res.predicted_likelihood == pytest.approx(np.exp(-1.0) / np.sqrt(4 * np.pi))


def test_update_subtracts_noise_mean():
    comp = GaussianComponent(1.0, [0.0], [[1.0]])
    a = kalman_update(comp, MeasurementModel([[1.0]]), [[1.0]], 0.5, [2.5])
    b = kalman_update(comp, MeasurementModel([[1.0]]), [[1.0]], 0.0, [2.0])
    np.testing.assert_allclose(a.posterior_mean, b.posterior_mean)
    assert a.predicted_likelihood == pytest.approx(b.predicted_likelihood)


def test_constant_velocity_matrices():
    m = MotionModel.constant_velocity(2.0, [1.0, 2.0, 3.0, 4.0])
    expected_F = np.array([[1, 2, 0, 0], [0, 1, 0, 0], [0, 0, 1, 2], [0, 0, 0, 1]], dtype=float)
    np.testing.assert_array_equal(m.F, expected_F)
    np.testing.assert_array_equal(m.Q, np.diag([1.0, 2.0, 3.0, 4.0]))


def test_cv_predict_example():
    motion = MotionModel.constant_velocity(1.0, [0.0, 0.0, 0.0, 0.0])
    out = kalman_predict(GaussianComponent(1.0, [0.0, 1.0, 5.0, -2.0], np.eye(4)), motion)
    np.testing.assert_allclose(out.mean, [1.0, 1.0, 3.0, -2.0])
    np.testing.assert_allclose(out.cov[:2, :2], [[2.0, 1.0], [1.0, 1.0]])


def test_update_matches_joseph_form(rng):
    meas = MeasurementModel([[1, 0, 0, 0], [0, 0, 1, 0]])
    for _ in range(50):
        comp = GaussianComponent(1.0, rng.normal(size=4), random_spd(rng, 4))
        R = random_spd(rng, 2, 0.1)
        z = rng.normal(size=2)
        a = kalman_update(comp, meas, R, 0.0, z)
        b = kalman_update(comp, meas, R, 0.0, z, joseph=True)
        np.testing.assert_allclose(a.posterior_cov, b.posterior_cov, rtol=1e-8, atol=1e-10)


def test_update_never_increases_covariance(rng):
    meas = MeasurementModel([[1, 0, 0, 0], [0, 0, 1, 0]])
    for _ in range(200):
        P = random_spd(rng, 4, rng.uniform(0.01, 100))
        res = kalman_update(GaussianComponent(1.0, np.zeros(4), P), meas, random_spd(rng, 2, rng.uniform(0.01, 100)),
                            0.0, np.zeros(2))
        gap = np.linalg.eigvalsh(P - res.posterior_cov).min()
        assert gap >= -1e-9 * np.abs(P).max()
        np.testing.assert_array_equal(res.posterior_cov, res.posterior_cov.T)


def test_singular_innovation_raises():
    comp = GaussianComponent(1.0, [0.0, 0.0], np.zeros((2, 2)))
    with pytest.raises(SingularInnovationError):
        kalman_update(comp, MeasurementModel([[1.0, 0.0]]), [[0.0]], 0.0, [1.0])


def test_safe_cholesky_jitters_borderline_psd():
    P = np.array([[1.0, 1.0], [1.0, 1.0]])
    L = safe_cholesky(P)
    np.testing.assert_allclose(L @ L.T, P, atol=1e-8)


def test_mixture_mass_and_ops():
    v = GaussianMixtureIntensity([0.2, 0.3], np.zeros((2, 2)), np.tile(np.eye(2), (2, 1, 1)))
    assert mixture_mass(v) == pytest.approx(0.5)
    assert (v + v).mass == pytest.approx(1.0)
    assert v.scaled(2.0).mass == pytest.approx(1.0)
    assert GaussianMixtureIntensity.empty(2).mass == 0.0
    assert len(v.take([1])) == 1


@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=8))
def test_mass_is_weight_sum(ws):
    n = len(ws)
    v = GaussianMixtureIntensity(ws, np.zeros((n, 1)), np.ones((n, 1, 1)))
    assert v.mass == pytest.approx(sum(ws))
