"""Command-line entry point: ``imfphd <subcommand> [flags]``.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .campaign import SERIES_COLUMNS, check_writable, rows_to_csv, run_campaign, track
from .config import (
    ConfigError,
    ExperimentConfig,
    load_document,
    paper_experiment,
    parse_experiment,
    parse_scenario,
)
from .noise import em_fit
from .scenario import frames_to_csv, frames_to_json, simulate

log = logging.getLogger("imfphd")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, runs=False, fmt=False, config=True) -> None:
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    if config:
        p.add_argument("--config", default="paper", help='config file path, or "paper" for the canned setup')
    p.add_argument("--seed", type=int, default=None, help="scenario seed (base seed for campaigns)")
    p.add_argument("--out", default=None, help="output directory")
    if runs:
        p.add_argument("--runs", type=int, default=None, help="number of Monte Carlo runs")
        p.add_argument("--workers", type=int, default=None, help="worker processes (default: available cores)")
    if fmt:
        p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="imfphd", description="GM-PHD / IMF-GM-PHD tracking experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("simulate", help="simulate a scenario and write its frames")
    _common(p, fmt=True)
    p = sub.add_parser("track", help="single run of every configured filter")
    _common(p, fmt=True)
    p = sub.add_parser("campaign", help="seeded Monte Carlo campaign")
    _common(p, runs=True)
    p = sub.add_parser("fit-noise", help="fit a Gaussian-mixture noise model by EM")
    _common(p, config=False)
    p.add_argument("--input", required=True, help="CSV of residual vectors, one row per sample")
    p.add_argument("--components", type=int, default=2, help="number of mixture terms L")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-6)
    p = sub.add_parser("paper-experiment", help="canned 200-run comparison of both filters")
    _common(p, runs=True, config=False)
    return parser


def _experiment(args) -> ExperimentConfig:
    if args.config == "paper":
        cfg = paper_experiment()
    else:
        doc = load_document(args.config)
        cfg = parse_experiment(doc if "filters" in doc else {"scenario": doc})
    kw = {}
    if getattr(args, "runs", None) is not None:
        kw["runs"] = args.runs
    if args.seed is not None:
        kw["base_seed"] = args.seed
    if args.out is not None:
        kw["output_dir"] = args.out
    if getattr(args, "workers", None) is not None:
        kw["workers"] = args.workers
    try:
        return replace(cfg, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _scenario(args):
    if args.config == "paper":
        scenario = parse_scenario("paper")
    else:
        doc = load_document(args.config)
        scenario = parse_scenario(doc.get("scenario", "paper") if "filters" in doc else doc)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    return scenario


def cmd_simulate(args) -> int:
    scenario = _scenario(args)
    out = Path(args.out or "simulate_out")
    check_writable(out)
    frames = simulate(scenario)
    if args.format == "csv":
        (out / "frames.csv").write_text(frames_to_csv(frames))
    else:
        (out / "frames.json").write_text(frames_to_json(frames) + "\n")
    return 0


def _estimates_csv(frames, est) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    dim = est[0].shape[1] if est else 0
    w.writerow(["step"] + [f"s{i}" for i in range(dim)])
    for f, E in zip(frames, est):
        for x in E:
            w.writerow([f.step] + [repr(float(v)) for v in x])
    return buf.getvalue()


def cmd_track(args) -> int:
    cfg = _experiment(args)
    scenario = cfg.scenario.with_seed(cfg.base_seed)
    out = Path(args.out or "track_out")
    check_writable(out)
    frames = simulate(scenario)
    doc = {"seed": scenario.seed, "filters": {}}
    for spec in cfg.filters:
        est, rows = track(spec, scenario, frames)
        if args.format == "csv":
            (out / f"estimates_{spec.name}.csv").write_text(_estimates_csv(frames, est))
            (out / f"ospa_{spec.name}.csv").write_text(rows_to_csv(rows))
        else:
            doc["filters"][spec.name] = {
                "estimates": [{"step": f.step, "states": E.tolist()} for f, E in zip(frames, est)],
                "ospa": [dict(zip(SERIES_COLUMNS, r.tolist())) for r in rows],
            }
        log.info("%s: mean OSPA %.4f", spec.name, rows[:, 1].mean())
    if args.format == "json":
        (out / "track.json").write_text(json.dumps(doc, indent=1) + "\n")
    return 0


def _campaign(cfg: ExperimentConfig) -> int:
    result = run_campaign(cfg)
    for name, s in result.filters.items():
        print(f"{name}: time-averaged OSPA {s.time_avg_ospa:.4f} "
              f"({len(s.per_run) - len(s.failed_runs)} ok, {len(s.failed_runs)} failed)")
    for c in result.comparisons:
        print(f"{c['first']} lower than {c['second']} in {c['first_lower']}/{c['n_pairs']} runs, "
              f"sign-test p={c['p_value']:.3g}")
    print(f"wall clock {result.wall_clock_seconds:.1f}s", file=sys.stderr)
    return 0


def cmd_campaign(args) -> int:
    return _campaign(_experiment(args))


def cmd_paper_experiment(args) -> int:
    cfg = paper_experiment(
        runs=200 if args.runs is None else args.runs,
        base_seed=0 if args.seed is None else args.seed,
        output_dir=args.out or "paper_experiment",
    )
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    return _campaign(cfg)


def read_samples(path: str) -> np.ndarray:
    rows = []
    try:
        with open(path, newline="") as fh:
            for i, row in enumerate(csv.reader(fh)):
                if not row:
                    continue
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    if i == 0:
                        continue  # header
                    raise ConfigError(f"{path}:{i + 1}: non-numeric value") from None
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path}: no samples")
    if len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{path}: rows have differing lengths")
    return np.array(rows)


def cmd_fit_noise(args) -> int:
    x = read_samples(args.input)
    out = Path(args.out or "fit_noise_out")
    check_writable(out)
    try:
        rep = em_fit(x, args.components, seed=0 if args.seed is None else args.seed,
                     max_iter=args.max_iter, tol=args.tol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    doc = {
        "noise": rep.model.to_records(),
        "fit": {"iterations": rep.iterations, "converged": rep.converged,
                "log_likelihood_trace": list(rep.log_likelihood_trace)},
    }
    (out / "noise_model.json").write_text(json.dumps(doc, indent=1) + "\n")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "track": cmd_track,
    "campaign": cmd_campaign,
    "fit-noise": cmd_fit_noise,
    "paper-experiment": cmd_paper_experiment,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
