"""Command-line entry point.

``apmcf run <config> [--out DIR] [--cadence N] [--quiet]`` integrates one
scenario and writes its artifacts; ``apmcf check <config>`` only validates;
``apmcf analyze <run-dir>`` recomputes the analysis from stored CSVs.

Exit codes
----------
0 converged, 1 input/output failure, 2 invalid configuration, 3 time budget
exhausted, 4 step budget exhausted, 10 and up: the run stopped on an error
(see :data:`ERROR_CODES`).
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass, replace
from typing import Dict, Optional

import numpy as np

from . import flow as flowmod
from .analysis import AnalysisReport, analyze_run, fit_sphere
from .config import ScenarioConfig, format_config, load_config
from .errors import ConfigError, FlowLabError
from .flow import Termination, read_timeseries_csv, timeseries_columns, write_timeseries_csv
from .surface import RadialGraph, snapshot, write_surface_csv

EXIT_CONVERGED = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_TIME_BUDGET = 3
EXIT_STEP_BUDGET = 4
EXIT_ERROR_OTHER = 19
ERROR_CODES = {
    "NonpositiveMeanCurvatureError": 10,
    "GraphDegenerationError": 11,
    "StepRejectedError": 12,
    "DegenerateSurfaceError": 13,
    "DomainError": 14,
    "DegenerateMetricError": 15,
}

TIMESERIES = "timeseries.csv"
FINAL_SURFACE = "final_surface.csv"
ANALYSIS = "analysis.csv"
SUMMARY = "summary.txt"
SCENARIO = "scenario.cfg"
FIT_COLUMNS = ("r0", "ax", "ay", "az", "fit_rms")


def exit_code(run: flowmod.FlowRun) -> int:
    if run.termination is Termination.CONVERGED:
        return EXIT_CONVERGED
    if run.termination is Termination.TIME_BUDGET:
        return EXIT_TIME_BUDGET
    if run.termination is Termination.STEP_BUDGET:
        return EXIT_STEP_BUDGET
    return ERROR_CODES.get(run.error_kind, EXIT_ERROR_OTHER)


# -- initial data ------------------------------------------------------------------

def build_initial_surface(cfg: ScenarioConfig) -> RadialGraph:
    """rho = sigma + sum amplitude * Y_lm about ``surface.center`` (orthonormal real Y_lm)."""
    grid = cfg.grid_spec()
    rho = np.full(grid.shape, float(cfg.surface.radius))
    for l, m, amp in cfg.surface.modes:
        rho = rho + amp * grid.harmonic(l, m)
    return RadialGraph(rho, grid, np.asarray(cfg.surface.center, float))


def initial_diagnostics(s: RadialGraph, ambient) -> Dict[str, float]:
    """min H, max|A°| and the integral of |A°|^2 of the initial surface."""
    snap = snapshot(s, ambient)
    aq = np.maximum(snap.Aring_sq, 0.0)
    return {"min_H": float(np.min(snap.H)), "max_Aring": float(np.sqrt(np.max(aq))),
            "int_Aring_sq": snap.integrate(aq)}


# -- execution ----------------------------------------------------------------------

@dataclass
class Execution:
    exit_code: int
    run: flowmod.FlowRun
    report: AnalysisReport
    out_dir: str
    initial: Dict[str, float]


def fit_columns(run: flowmod.FlowRun):
    """Per-record sphere-fit columns (r0, center, rms)."""
    fits = [fit_sphere(rec.surface) for rec in run.records]
    cols = np.array([[f.r0, *f.center, f.rms] for f in fits], dtype=float).reshape(-1, 5)
    return {name: cols[:, i] for i, name in enumerate(FIT_COLUMNS)}


def _summary_text(cfg, run, code, initial, report):
    head = [
        "apmcf run summary",
        f"ambient: {cfg.ambient.kind.value}  m={cfg.ambient.m:g}  "
        f"perturbation={cfg.ambient.perturbation.value} beta={cfg.ambient.beta:g}",
        f"flow: {cfg.flow.global_term.value}  cfl={cfg.flow.cfl:g}  "
        f"grid={cfg.grid_spec().n_theta}x{cfg.grid_spec().n_phi}",
        f"termination: {run.termination.value}"
        + (f" ({run.error_kind}: {run.error_message})" if run.error_kind else ""),
        f"exit code: {code}",
        f"steps: {run.steps}",
    ]
    if initial:
        head.append("initial: " + "  ".join(f"{k}={v:.6g}" for k, v in initial.items()))
    return "\n".join(head) + "\n\n" + report.summary()


def _write_analysis(out_dir, cfg, run, code, initial, report):
    report.write_csv(os.path.join(out_dir, ANALYSIS))
    with open(os.path.join(out_dir, SUMMARY), "w", newline="\n") as fh:
        fh.write(_summary_text(cfg, run, code, initial, report))


def execute(cfg: ScenarioConfig, out_dir: Optional[str] = None, cadence: Optional[int] = None,
            quiet: bool = True) -> Execution:
    """Run one scenario and write its artifacts into ``out_dir``.

    Raises OSError when the directory or a file cannot be written.
    """
    out_dir = out_dir or cfg.output.dir
    stride = cadence or cfg.output.cadence
    os.makedirs(out_dir, exist_ok=True)
    ambient = cfg.ambient_metric()
    initial_surface = build_initial_surface(cfg)
    try:
        initial = initial_diagnostics(initial_surface, ambient)
    except FlowLabError:
        initial = {}

    def progress(rep):
        if rep.step % (20 * cfg.flow.monitor_cadence) == 0:
            print(f"t={rep.t:.6g} step={rep.step} max|A°|={rep.max_Aring:.3e} "
                  f"H=[{rep.min_H:.10g}, {rep.max_H:.10g}] area drift={rep.area_drift:.2e}",
                  flush=True)

    run = flowmod.run(initial_surface, ambient, cfg.flow_config(),
                      callback=None if quiet else progress)
    code = exit_code(run)

    columns = timeseries_columns(run)
    columns.update(fit_columns(run))
    write_timeseries_csv(os.path.join(out_dir, TIMESERIES), columns, stride)
    final_snap = run.final.snap if run.final is not None and run.records else None
    write_surface_csv(os.path.join(out_dir, FINAL_SURFACE), final_snap)
    with open(os.path.join(out_dir, SCENARIO), "w", newline="\n") as fh:
        fh.write(format_config(cfg))
    report = analyze_run(columns, ambient, cfg.analysis_settings(), final_snap)
    _write_analysis(out_dir, cfg, run, code, initial, report)
    if not quiet:
        print(_summary_text(cfg, run, code, initial, report), end="")
    return Execution(code, run, report, out_dir, initial)


def analyze_directory(run_dir) -> AnalysisReport:
    """Recompute the analysis of a finished run from its stored artifacts."""
    cfg = load_config(os.path.join(run_dir, SCENARIO))
    columns = read_timeseries_csv(os.path.join(run_dir, TIMESERIES))
    ambient = cfg.ambient_metric()
    snap = None
    with open(os.path.join(run_dir, FINAL_SURFACE), newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows:
        grid = cfg.grid_spec()
        rho = np.array([float(r["rho"]) for r in rows]).reshape(grid.shape)
        snap = snapshot(RadialGraph(rho, grid, np.asarray(cfg.surface.center, float)), ambient)
    return analyze_run(columns, ambient, cfg.analysis_settings(), snap)


# -- command line ---------------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="apmcf", description="Constrained mean curvature flow of radial graphs.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="integrate a scenario and write CSV artifacts")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides output.dir)")
    r.add_argument("--cadence", type=int, help="keep every N-th record in timeseries.csv")
    r.add_argument("--quiet", action="store_true", help="no progress or summary on stdout")
    c = sub.add_parser("check", help="validate a scenario file")
    c.add_argument("config")
    a = sub.add_parser("analyze", help="recompute the analysis of a stored run")
    a.add_argument("run_dir")
    return p


def _load(path):
    try:
        return load_config(path), None
    except ConfigError as exc:
        for e in exc.errors:
            print(f"{path}: {e}", file=sys.stderr)
        return None, EXIT_CONFIG
    except OSError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return None, EXIT_IO


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "check":
        cfg, err = _load(args.config)
        if err is None:
            print(f"{args.config}: ok")
        return EXIT_CONVERGED if err is None else err
    if args.command == "analyze":
        try:
            report = analyze_directory(args.run_dir)
            report.write_csv(os.path.join(args.run_dir, ANALYSIS))
        except ConfigError as exc:
            print(f"{args.run_dir}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except (OSError, KeyError, ValueError) as exc:
            print(f"{args.run_dir}: cannot analyze: {exc}", file=sys.stderr)
            return EXIT_IO
        print(report.summary(), end="")
        return EXIT_CONVERGED
    cfg, err = _load(args.config)
    if err is not None:
        return err
    if args.cadence is not None and args.cadence < 1:
        print("--cadence must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = execute(cfg, args.out, args.cadence, quiet=args.quiet)
    except OSError as exc:
        print(f"cannot write artifacts: {exc}", file=sys.stderr)
        return EXIT_IO
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
