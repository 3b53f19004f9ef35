"""Experiment configuration: dataclasses plus a JSON-compatible schema.

See README.md for the field-by-field description of the document format.
Any mapping in the document may be replaced by the string ``"paper"`` where
noted, and a scenario mapping may carry ``"base": "paper"`` to start from
the canned scene and override individual keys.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from .gauss import GaussianMixtureIntensity, MeasurementModel, MotionModel
from .gmphd import BirthModel, ClutterModel, FilterParams, GmPhdFilter, SpawnModel, SpawnTerm
from .imf import ImfGmPhdFilter
from .metrics import OspaParams
from .noise import NoiseMixtureModel
from .scenario import ScenarioConfig, TargetScript, paper_scenario

FILTER_KINDS = ("gm-phd", "imf-gm-phd")
BIRTH_WEIGHT = 0.03
BIRTH_COV_DIAG = (25.0, 4.0, 25.0, 4.0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FilterSpec:
    name: str
    kind: str
    params: FilterParams
    noise: NoiseMixtureModel
    birth: BirthModel
    spawn: SpawnModel = SpawnModel()
    ospa: OspaParams = OspaParams()

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ConfigError(f"unknown filter kind {self.kind!r}; expected one of {FILTER_KINDS}")
        if self.kind == "gm-phd" and self.noise.L != 1:
            raise ConfigError(f"filter {self.name!r}: gm-phd needs a single noise term, got L={self.noise.L}")
        if not self.name or any(ch in self.name for ch in "/\\ "):
            raise ConfigError(f"filter name {self.name!r} must be non-empty and file-name safe")

    def build(self, scenario: ScenarioConfig):
        if self.kind == "gm-phd":
            term = self.noise.components[0]
            return GmPhdFilter(
                scenario.motion, scenario.meas, self.birth, scenario.clutter,
                self.params, term.R, term.mu, self.spawn,
            )
        return ImfGmPhdFilter(
            scenario.motion, scenario.meas, self.birth, scenario.clutter,
            self.params, self.noise, self.spawn,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig
    filters: tuple[FilterSpec, ...]
    runs: int = 200
    base_seed: int = 0
    output_dir: str = "out"
    workers: int | None = None

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if not self.filters:
            raise ConfigError("at least one filter spec is required")
        names = [f.name for f in self.filters]
        if len(set(names)) != len(names):
            raise ConfigError(f"filter names must be unique, got {names}")
        object.__setattr__(self, "filters", tuple(self.filters))


# -- parsing ---------------------------------------------------------------

def _matrix(x, name) -> np.ndarray:
    try:
        return np.atleast_2d(np.asarray(x, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected a numeric matrix") from exc


def _require(doc: dict, key: str, ctx: str):
    if key not in doc:
        raise ConfigError(f"{ctx}: missing required field {key!r}")
    return doc[key]


def parse_noise(doc, ctx="noise") -> NoiseMixtureModel:
    if not isinstance(doc, list) or not doc:
        raise ConfigError(f"{ctx}: expected a non-empty list of {{delta, mu, R}} records")
    try:
        return NoiseMixtureModel.from_records(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{ctx}: {exc}") from exc


def parse_scenario(doc) -> ScenarioConfig:
    if doc == "paper":
        return paper_scenario()
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be \"paper\" or a mapping")
    doc = dict(doc)
    base = doc.pop("base", None)
    if base not in (None, "paper"):
        raise ConfigError(f"scenario.base must be \"paper\", got {base!r}")
    known = {"steps", "dt", "targets", "motion", "measurement", "noise", "noise_mode",
             "clutter", "p_detect", "p_survive", "seed"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"scenario: unknown fields {sorted(unknown)}")
    try:
        kw: dict[str, Any] = {}
        if "targets" in doc:
            kw["targets"] = tuple(
                TargetScript(int(t["birth_step"]), int(t["death_step"]), t["initial_state"])
                for t in doc["targets"]
            )
        if "motion" in doc:
            m = doc["motion"]
            if "cv_q_diag" in m:
                dt = float(doc.get("dt", 1.0))
                kw["motion"] = MotionModel.constant_velocity(dt, m["cv_q_diag"])
            else:
                kw["motion"] = MotionModel(_matrix(m["F"], "motion.F"), _matrix(m["Q"], "motion.Q"))
        if "measurement" in doc:
            kw["meas"] = MeasurementModel(_matrix(doc["measurement"]["H"], "measurement.H"))
        if "noise" in doc:
            kw["noise"] = parse_noise(doc["noise"], "scenario.noise")
        if "clutter" in doc:
            c = doc["clutter"]
            kw["clutter"] = ClutterModel(float(c["mean_count"]), c["lower"], c["upper"])
        for key, cast in (("steps", int), ("dt", float), ("p_detect", float),
                          ("p_survive", float), ("seed", int), ("noise_mode", str)):
            if key in doc:
                kw[key] = cast(doc[key])
        if base == "paper":
            return replace(paper_scenario(), **kw)
        for key in ("steps", "dt", "targets", "motion", "meas", "noise", "clutter", "p_detect"):
            if key not in kw:
                raise ConfigError(f"scenario: missing required field {key!r}")
        return ScenarioConfig(**kw)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"scenario: {exc}") from exc


def scenario_birth(scenario: ScenarioConfig, weight=BIRTH_WEIGHT, cov_diag=BIRTH_COV_DIAG) -> BirthModel:
    """Birth terms at each scripted target's start position, zero velocity."""
    pos_idx = np.flatnonzero(np.any(scenario.meas.H != 0, axis=0))
    means = []
    for t in scenario.targets:
        m = np.zeros(scenario.motion.dim)
        m[pos_idx] = t.initial_state[pos_idx]
        means.append(m)
    k = len(means)
    cov = np.diag(np.asarray(cov_diag, dtype=float))
    return BirthModel(GaussianMixtureIntensity(np.full(k, weight), np.array(means), np.tile(cov, (k, 1, 1))))


def parse_birth(doc, scenario: ScenarioConfig) -> BirthModel:
    if doc is None or doc == "scenario":
        return scenario_birth(scenario)
    try:
        if isinstance(doc, dict):
            return scenario_birth(
                scenario, float(doc.get("weight", BIRTH_WEIGHT)), doc.get("cov_diag", BIRTH_COV_DIAG)
            )
        return BirthModel(GaussianMixtureIntensity(
            [float(b["weight"]) for b in doc],
            [b["mean"] for b in doc],
            [b["cov"] for b in doc],
        ))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"birth: {exc}") from exc


def parse_filter(doc: dict, scenario: ScenarioConfig) -> FilterSpec:
    if not isinstance(doc, dict):
        raise ConfigError("each filter spec must be a mapping")
    kind = _require(doc, "kind", "filter")
    name = doc.get("name", kind)
    ctx = f"filter {name!r}"
    noise_doc = doc.get("noise", "scenario" if kind == "imf-gm-phd" else "moment-matched")
    if "R" in doc:
        noise = NoiseMixtureModel.gaussian(_matrix(doc["R"], f"{ctx}.R"))
    elif noise_doc == "scenario":
        noise = scenario.noise
    elif noise_doc == "moment-matched":
        noise = scenario.noise.moment_matched()
    else:
        noise = parse_noise(noise_doc, f"{ctx}.noise")
    pdoc = dict(doc.get("params", {}))
    pdoc.setdefault("p_survive", scenario.p_survive)
    pdoc.setdefault("p_detect", scenario.p_detect)
    allowed = {f.name for f in fields(FilterParams)}
    if set(pdoc) - allowed:
        raise ConfigError(f"{ctx}.params: unknown fields {sorted(set(pdoc) - allowed)}")
    try:
        params = FilterParams(**pdoc)
        ospa = OspaParams(**doc.get("ospa", {}))
        spawn = SpawnModel(tuple(
            SpawnTerm(float(s["weight"]), s["F"], s["d"], s["Q"]) for s in doc.get("spawn", [])
        ))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{ctx}: {exc}") from exc
    return FilterSpec(name, kind, params, noise, parse_birth(doc.get("birth"), scenario), spawn, ospa)


def parse_experiment(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("experiment config must be a mapping")
    scenario = parse_scenario(doc.get("scenario", "paper"))
    filters = doc.get("filters", "paper")
    if filters == "paper":
        filters = PAPER_FILTERS
    if not isinstance(filters, list):
        raise ConfigError("filters must be a list of filter specs or \"paper\"")
    try:
        return ExperimentConfig(
            scenario=scenario,
            filters=tuple(parse_filter(f, scenario) for f in filters),
            runs=int(doc.get("runs", 200)),
            base_seed=int(doc.get("base_seed", 0)),
            output_dir=str(doc.get("output_dir", "out")),
            workers=None if doc.get("workers") is None else int(doc["workers"]),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


PAPER_FILTERS = [
    {"name": "gm-phd", "kind": "gm-phd", "noise": "moment-matched"},
    {"name": "imf-gm-phd", "kind": "imf-gm-phd", "noise": "scenario"},
]


def paper_experiment(runs: int = 200, base_seed: int = 0, output_dir: str = "paper_experiment") -> ExperimentConfig:
    return parse_experiment(
        {"scenario": "paper", "filters": PAPER_FILTERS, "runs": runs,
         "base_seed": base_seed, "output_dir": output_dir}
    )


def load_document(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


# -- echo ------------------------------------------------------------------

def _arr(x):
    return np.asarray(x).tolist()


def scenario_to_dict(s: ScenarioConfig) -> dict:
    return {
        "steps": s.steps,
        "dt": s.dt,
        "targets": [
            {"birth_step": t.birth_step, "death_step": t.death_step, "initial_state": _arr(t.initial_state)}
            for t in s.targets
        ],
        "motion": {"F": _arr(s.motion.F), "Q": _arr(s.motion.Q)},
        "measurement": {"H": _arr(s.meas.H)},
        "noise": s.noise.to_records(),
        "noise_mode": s.noise_mode,
        "clutter": {"mean_count": s.clutter.mean_count, "lower": _arr(s.clutter.lower),
                    "upper": _arr(s.clutter.upper)},
        "p_detect": s.p_detect,
        "p_survive": s.p_survive,
        "seed": s.seed,
    }


def filter_to_dict(f: FilterSpec) -> dict:
    b = f.birth.intensity
    return {
        "name": f.name,
        "kind": f.kind,
        "params": asdict(f.params),
        "noise": f.noise.to_records(),
        "birth": [{"weight": float(w), "mean": _arr(m), "cov": _arr(P)}
                  for w, m, P in zip(b.weights, b.means, b.covs)],
        "spawn": [{"weight": t.weight, "F": _arr(t.F), "d": _arr(t.d), "Q": _arr(t.Q)}
                  for t in f.spawn.terms],
        "ospa": asdict(f.ospa),
    }


def experiment_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "scenario": scenario_to_dict(cfg.scenario),
        "filters": [filter_to_dict(f) for f in cfg.filters],
        "runs": cfg.runs,
        "base_seed": cfg.base_seed,
    }
