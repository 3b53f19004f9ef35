"""Seeded Monte Carlo campaigns over one scenario and several filters."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from .config import ExperimentConfig, FilterSpec, experiment_to_dict
from .gmphd import Estimate, FilterDivergenceError
from .metrics import ospa_series
from .scenario import ScenarioFrame, simulate

log = logging.getLogger(__name__)

SERIES_COLUMNS = ("step", "ospa", "loc", "card", "estCount", "trueCount")


def stream_hash(frames: list[ScenarioFrame]) -> str:
    """SHA-256 over the measurement stream (step, shape and float64 bytes)."""
    h = hashlib.sha256()
    for f in frames:
        Z = np.ascontiguousarray(f.measurements, dtype="<f8")
        h.update(np.array([f.step, *Z.shape], dtype="<i8").tobytes())
        h.update(Z.tobytes())
    return h.hexdigest()


def estimates_array(estimates: list[Estimate], dim: int) -> np.ndarray:
    return np.array([e.mean for e in estimates]).reshape(-1, dim)


def track(spec: FilterSpec, scenario, frames: list[ScenarioFrame]):
    """Run one filter over a frame list; return (estimate arrays, series rows)."""
    flt = spec.build(scenario)
    dim = scenario.motion.dim
    est = [estimates_array(e, dim) for e in flt.run([f.measurements for f in frames])]
    pos_idx = tuple(np.flatnonzero(np.any(scenario.meas.H != 0, axis=0)))
    series = ospa_series([f.truth for f in frames], est, spec.ospa, pos_idx)
    rows = np.array([
        (f.step, r.distance, r.localization, r.cardinality, len(e), len(f.truth))
        for f, r, e in zip(frames, series, est)
    ], dtype=float).reshape(-1, len(SERIES_COLUMNS))
    return est, rows


@dataclass
class RunRecord:
    run: int
    seed: int
    stream_hash: str
    rows: dict[str, np.ndarray | None]
    errors: dict[str, str]
    seen_hash: dict[str, str]
    seconds: dict[str, float]


def run_one(config: ExperimentConfig, r: int) -> RunRecord:
    seed = config.base_seed + r
    scenario = config.scenario.with_seed(seed)
    frames = simulate(scenario)
    h = stream_hash(frames)
    rows, errors, seen, secs = {}, {}, {}, {}
    for spec in config.filters:
        seen[spec.name] = stream_hash(frames)
        t0 = time.perf_counter()
        try:
            _, rows[spec.name] = track(spec, scenario, frames)
        except (FilterDivergenceError, np.linalg.LinAlgError, FloatingPointError) as exc:
            rows[spec.name] = None
            errors[spec.name] = f"{type(exc).__name__}: {exc}"
            log.warning("run %d filter %s failed: %s", r, spec.name, exc)
        secs[spec.name] = time.perf_counter() - t0
    return RunRecord(r, seed, h, rows, errors, seen, secs)


@dataclass
class FilterSummary:
    name: str
    per_run: list[np.ndarray | None]
    mean_series: np.ndarray | None
    time_avg_ospa: float
    failed_runs: list[int]
    wall_clock: dict[str, float] = field(default_factory=dict)

    @property
    def per_run_time_avg(self) -> np.ndarray:
        return np.array([np.nan if s is None else s[:, 1].mean() for s in self.per_run])


@dataclass
class CampaignResult:
    filters: dict[str, FilterSummary]
    stream_hashes: list[str]
    comparisons: list[dict]
    wall_clock_seconds: float


def paired_sign_test(a: np.ndarray, b: np.ndarray) -> dict:
    """Two-sided sign test on paired values; ties and failed runs dropped."""
    ok = np.isfinite(a) & np.isfinite(b)
    less = int(np.sum(a[ok] < b[ok]))
    greater = int(np.sum(a[ok] > b[ok]))
    n = less + greater
    p = binomtest(less, n, 0.5).pvalue if n else 1.0
    return {"n_pairs": int(ok.sum()), "first_lower": less, "first_higher": greater,
            "ties": int(ok.sum()) - n, "p_value": float(p)}


def rows_to_csv(rows: np.ndarray, header=SERIES_COLUMNS, int_columns=("step", "estCount", "trueCount")) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    ints = [h in int_columns for h in header]
    for row in rows:
        w.writerow([str(int(v)) if is_int else repr(float(v)) for v, is_int in zip(row, ints)])
    return buf.getvalue()


def aggregate(per_run: list[np.ndarray | None]) -> np.ndarray | None:
    """Mean series with spread columns: ospa_std, ospa_ci95, runs."""
    ok = [s for s in per_run if s is not None]
    if not ok:
        return None
    stack = np.stack(ok)
    mean = stack.mean(axis=0)
    n = len(ok)
    std = stack[:, :, 1].std(axis=0, ddof=1) if n > 1 else np.zeros(stack.shape[1])
    ci = 1.96 * std / np.sqrt(n)
    return np.column_stack([mean, std, ci, np.full(len(mean), n)])


AGG_COLUMNS = SERIES_COLUMNS + ("ospa_std", "ospa_ci95", "runs")


def check_writable(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    probe.write_text("")
    probe.unlink()


def default_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def run_campaign(config: ExperimentConfig, write: bool = True) -> CampaignResult:
    """Simulate ``runs`` seeded scenes and run every filter on each.

    Run ``r`` uses seed ``base_seed + r``. Runs may execute in worker
    processes; results are merged in run order so the output files do not
    depend on the worker count. Wall-clock figures are logged and returned
    but never written, to keep the files byte-reproducible.
    """
    out = Path(config.output_dir)
    if write:
        check_writable(out)
    workers = config.workers or default_workers()
    t0 = time.perf_counter()
    job = partial(run_one, config)
    if workers > 1 and config.runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(job, range(config.runs), chunksize=max(1, config.runs // (4 * workers))))
    else:
        records = [job(r) for r in range(config.runs)]
    elapsed = time.perf_counter() - t0

    for rec in records:
        if any(v != rec.stream_hash for v in rec.seen_hash.values()):
            raise RuntimeError(f"run {rec.run}: filters saw different measurement streams")

    summaries = {}
    for spec in config.filters:
        per_run = [rec.rows[spec.name] for rec in records]
        mean = aggregate(per_run)
        secs = np.array([rec.seconds[spec.name] for rec in records])
        summary = FilterSummary(
            name=spec.name,
            per_run=per_run,
            mean_series=mean,
            time_avg_ospa=float("nan") if mean is None else float(mean[:, 1].mean()),
            failed_runs=[rec.run for rec in records if rec.rows[spec.name] is None],
            wall_clock={"total": float(secs.sum()), "mean_per_run": float(secs.mean())},
        )
        summaries[spec.name] = summary
        log.info("%s: time-averaged OSPA %.4f, %d failed, %.2fs/run",
                 spec.name, summary.time_avg_ospa, len(summary.failed_runs), secs.mean())

    comparisons = []
    for a, b in combinations([f.name for f in config.filters], 2):
        res = paired_sign_test(summaries[a].per_run_time_avg, summaries[b].per_run_time_avg)
        comparisons.append({"first": a, "second": b, **res})

    result = CampaignResult(summaries, [rec.stream_hash for rec in records], comparisons, elapsed)
    if write:
        write_campaign(config, result, records, out)
    return result


def write_campaign(config: ExperimentConfig, result: CampaignResult, records, out: Path) -> None:
    for name, s in result.filters.items():
        for r, rows in enumerate(s.per_run):
            if rows is not None:
                (out / f"run_{r}_{name}.csv").write_text(rows_to_csv(rows))
        if s.mean_series is not None:
            (out / f"aggregate_{name}.csv").write_text(rows_to_csv(s.mean_series, AGG_COLUMNS, ("step", "runs")))
    doc = {
        "config": experiment_to_dict(config),
        "summary": {
            name: {
                "time_averaged_ospa": s.time_avg_ospa,
                "successful_runs": len(s.per_run) - len(s.failed_runs),
                "failed_runs": s.failed_runs,
                "errors": {str(rec.run): rec.errors[name] for rec in records if name in rec.errors},
            }
            for name, s in result.filters.items()
        },
        "comparisons": result.comparisons,
        "runs": [
            {"run": rec.run, "seed": rec.seed, "stream_hash": rec.stream_hash,
             "filter_stream_hashes": rec.seen_hash}
            for rec in records
        ],
    }
    (out / "campaign.json").write_text(json.dumps(doc, indent=1, allow_nan=True) + "\n")
