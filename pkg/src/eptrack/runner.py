"""Monte Carlo experiment runner: tracking loops, scoring, and output files.

For every run a fresh scenario is drawn from a per-run seed split off the
master seed, every configured method consumes that same scenario (paired
comparisons), and each (run, method, step, sensor) gets one CSV row with
the GOSPA decomposition and the step's communication-iteration count.

Outputs are byte-deterministic given (config, master seed): rows are
sorted, floats are written with repr round-tripping, and wall-clock
timing is only recorded when explicitly requested.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baseline import PooledMeasurements, centralized_gibbs_step
from .config import ExperimentConfig, MethodSpec
from .ep import EPConfig, EPDivergenceError, run_ep_timestep
from .gaussian import InvalidCavityError, NotPositiveDefiniteError
from .metrics import GospaConfig, aggregate, gospa
from .model import (
    POS_IDX,
    Scenario,
    generate_scenario,
    initial_beliefs,
    predict_prior,
)
from .network import DisconnectedTopologyError, FloodOnce, FullExchange

__all__ = [
    "ResultsRecord",
    "RESULTS_SCHEMA",
    "SUMMARY_SCHEMA",
    "ESTIMATES_SCHEMA",
    "run_experiment",
    "run_method_on_scenario",
    "write_results_csv",
    "read_results_csv",
    "summarize_records",
    "render_table",
    "score_scenario",
]

RESULTS_SCHEMA = "eptrack-results-v1"
SUMMARY_SCHEMA = "eptrack-summary-v1"
ESTIMATES_SCHEMA = "eptrack-estimates-v1"

CSV_COLUMNS = ["run", "method", "step", "sensor", "gospa", "loc", "missed", "false", "ci", "wall_ms"]

CENTRAL_SENSOR = -1  # sensor column value for centralised methods
NO_CI = -1.0  # ci column value where communication is not counted

_NUMERICAL_ABORTS = (
    EPDivergenceError,
    InvalidCavityError,
    NotPositiveDefiniteError,
    DisconnectedTopologyError,
)


@dataclass
class ResultsRecord:
    run: int
    method: str
    step: int
    sensor: int
    gospa: float
    loc: float
    missed: float
    false: float
    ci: float
    wall_ms: float


def _method_seed(cfg_seed: int, run: int, spec: MethodSpec) -> tuple:
    slot, sweeps = spec.seed_slot
    return (cfg_seed, run, 7000 + slot, sweeps)


def _positions(beliefs) -> np.ndarray:
    return np.stack([b.mean[list(POS_IDX)] for b in beliefs])


def run_method_on_scenario(scenario: Scenario, spec: MethodSpec, gospa_cfg: GospaConfig,
                           seed_key: tuple, run: int, timing: bool = False,
                           check_identity: bool = False):
    """Track the full scenario with one method; returns (records, max identity error)."""
    records = []
    identity_error = 0.0
    beliefs = initial_beliefs(scenario)
    if spec.centralized:
        posterior = beliefs
        for step in range(scenario.steps):
            prior = posterior if step == 0 else predict_prior(posterior, scenario.dynamics)
            rng = np.random.default_rng(np.random.SeedSequence(list(seed_key) + [step]))
            pooled = PooledMeasurements.pool(scenario.measurements[step], scenario.sensors)
            tic = time.perf_counter() if timing else 0.0
            posterior, _ = centralized_gibbs_step(prior, pooled, spec.gibbs, rng)
            wall = (time.perf_counter() - tic) * 1e3 if timing else 0.0
            res = gospa(_positions(posterior), scenario.truth_positions(step), gospa_cfg)
            records.append(
                ResultsRecord(run, spec.name, step, CENTRAL_SENSOR, res.value,
                              res.localisation, res.missed, res.false, NO_CI, wall)
            )
        return records, identity_error

    scheme = FullExchange() if spec.kind == "dep" else FloodOnce()
    node_beliefs = None
    for step in range(scenario.steps):
        if step == 0:
            priors = beliefs
        else:
            priors = [predict_prior(nb, scenario.dynamics) for nb in node_beliefs]
        tic = time.perf_counter() if timing else 0.0
        result = run_ep_timestep(
            priors,
            scenario.measurements[step],
            scenario.sensors,
            spec.ep,
            spec.gibbs,
            scheme,
            adjacency=scenario.topology.at(step),
            seed=list(seed_key) + [step],
            step=step,
            check_identity=check_identity,
        )
        wall = (time.perf_counter() - tic) * 1e3 if timing else 0.0
        node_beliefs = result.node_beliefs
        if check_identity:
            identity_error = max(identity_error, result.identity_error)
        truth = scenario.truth_positions(step)
        for sensor in range(scenario.n_sensors):
            res = gospa(_positions(node_beliefs[sensor]), truth, gospa_cfg)
            records.append(
                ResultsRecord(run, spec.name, step, sensor, res.value,
                              res.localisation, res.missed, res.false,
                              float(result.ci), wall)
            )
    return records, identity_error


def _execute_run(cfg: ExperimentConfig, run: int, timing: bool):
    scenario = generate_scenario(cfg.model, seed=[cfg.seed, run])
    records, failures = [], []
    for spec in cfg.methods:
        try:
            recs, _ = run_method_on_scenario(
                scenario, spec, cfg.gospa, _method_seed(cfg.seed, run, spec), run, timing
            )
            records.extend(recs)
        except _NUMERICAL_ABORTS as exc:
            failures.append({"run": run, "method": spec.name, "error": str(exc)})
    return records, failures


def run_experiment(cfg: ExperimentConfig, out_dir, timing: bool = False) -> dict:
    """Run all methods over all Monte Carlo runs; writes results.csv and
    summary.json under out_dir and returns the summary dict."""
    os.makedirs(out_dir, exist_ok=True)
    workers = cfg.workers if cfg.workers else min(os.cpu_count() or 1, cfg.runs)
    per_run = [None] * cfg.runs
    if workers > 1 and cfg.runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(_execute_run, cfg, run, timing): run for run in range(cfg.runs)
            }
            for future, run in futures.items():
                per_run[run] = future.result()
    else:
        for run in range(cfg.runs):
            per_run[run] = _execute_run(cfg, run, timing)

    records, failures = [], []
    for run_records, run_failures in per_run:
        records.extend(run_records)
        failures.extend(run_failures)
    method_order = {spec.name: i for i, spec in enumerate(cfg.methods)}
    records.sort(key=lambda r: (r.run, method_order[r.method], r.step, r.sensor))

    results_path = os.path.join(out_dir, "results.csv")
    write_results_csv(records, results_path)
    summary = summarize_records(records, failures=failures, runs=cfg.runs,
                                seed=cfg.seed, preset=cfg.preset,
                                method_order=[m.name for m in cfg.methods])
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return summary


# ---------------------------------------------------------------------------
# Results files


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {RESULTS_SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [r.run, r.method, r.step, r.sensor, _fmt(r.gospa), _fmt(r.loc),
                 _fmt(r.missed), _fmt(r.false), _fmt(r.ci), _fmt(r.wall_ms)]
            )


def read_results_csv(path) -> list:
    records = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(io.StringIO("".join(lines)))
    for row in reader:
        records.append(
            ResultsRecord(
                run=int(row["run"]), method=row["method"], step=int(row["step"]),
                sensor=int(row["sensor"]), gospa=float(row["gospa"]), loc=float(row["loc"]),
                missed=float(row["missed"]), false=float(row["false"]),
                ci=float(row["ci"]), wall_ms=float(row["wall_ms"]),
            )
        )
    return records


def summarize_records(records, failures=None, runs=None, seed=None, preset=None,
                      method_order=None) -> dict:
    """Aggregate records into the per-method summary (Table-style layout)."""
    failures = failures or []
    failed = {(f["run"], f["method"]) for f in failures}
    by_method: dict = {}
    for r in records:
        if (r.run, r.method) in failed:
            continue
        by_method.setdefault(r.method, {}).setdefault(r.run, []).append(r)
    if method_order is None:
        method_order = sorted(by_method)
    methods = {}
    for name in method_order:
        run_map = by_method.get(name)
        if not run_map:
            continue
        gospa_per_run = [[r.gospa for r in recs] for recs in run_map.values()]
        ci_per_run = [
            sorted({(r.step, r.ci) for r in recs if r.ci >= 0})
            for recs in run_map.values()
        ]
        has_ci = all(len(c) > 0 for c in ci_per_run)
        stats = aggregate(
            gospa_per_run,
            [[ci for _, ci in run] for run in ci_per_run] if has_ci else None,
        )
        methods[name] = {
            "mean_gospa": stats.mean_gospa,
            "std_gospa": stats.std_gospa,
            "mean_ci": stats.mean_ci,
            "runs_used": len(run_map),
        }
    out = {
        "schema": SUMMARY_SCHEMA,
        "preset": preset,
        "runs": runs,
        "seed": seed,
        "std_is": "sample standard deviation across per-run means",
        "methods": methods,
        "failed_runs": failures,
    }
    return out


def render_table(summary: dict) -> str:
    rows = [("Method", "Mean GOSPA", "Std", "Mean CI", "Runs")]
    for name, stats in summary["methods"].items():
        ci = "--" if stats["mean_ci"] is None else f"{stats['mean_ci']:.1f}"
        rows.append(
            (name, f"{stats['mean_gospa']:.2f}", f"{stats['std_gospa']:.2f}", ci,
             str(stats["runs_used"]))
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def score_scenario(scenario: Scenario, estimates: np.ndarray, gospa_cfg: GospaConfig) -> list:
    """GOSPA of externally supplied per-step position estimates vs truth.

    estimates has shape (steps, n_estimates, 2).
    """
    estimates = np.asarray(estimates, dtype=float)
    if estimates.shape[0] != scenario.steps:
        raise ValueError(
            f"estimates cover {estimates.shape[0]} steps, scenario has {scenario.steps}"
        )
    return [
        gospa(estimates[step], scenario.truth_positions(step), gospa_cfg)
        for step in range(scenario.steps)
    ]
