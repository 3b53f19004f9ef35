"""GM-PHD and interacting-model-fusion GM-PHD multi-target filters."""

from .gauss import (
    GaussianComponent,
    GaussianMixtureIntensity,
    KalmanUpdateResult,
    MeasurementModel,
    MotionModel,
    gaussian_pdf,
    kalman_predict,
    kalman_update,
    mixture_mass,
)
from .gmphd import (
    BirthModel,
    ClutterModel,
    FilterParams,
    GmPhdFilter,
    SpawnModel,
    SpawnTerm,
    extract_states,
    gmphd_step,
    phd_predict,
    phd_update,
    prune_and_merge,
)
from .imf import ImfGmPhdFilter, imf_gmphd_step, init_bank
from .metrics import OspaParams, OspaResult, ospa, ospa_series
from .noise import NoiseMixtureModel, build_transition_matrix, em_fit, sample_noise
from .scenario import ScenarioConfig, TargetScript, paper_scenario, simulate

__version__ = "0.1.0"
