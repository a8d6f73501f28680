"""Command-line interface.

Subcommands:
  simulate    draw a scenario from a config and write scenario.json
  run         execute a Monte Carlo experiment (results.csv + summary.json)
  score       GOSPA of stored estimates against a stored scenario
  summarize   aggregate a results.csv into summary.json and print a table

Exit codes: 0 success, 2 configuration/usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import ConfigError, load_config
from .metrics import GospaConfig
from .model import generate_scenario, load_scenario, save_scenario
from .runner import (
    ESTIMATES_SCHEMA,
    read_results_csv,
    render_table,
    run_experiment,
    score_scenario,
    summarize_records,
)

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eptrack",
        description="Distributed EP multi-sensor multi-object tracking experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="TOML config path")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=".", help="output directory")

    p_sim = sub.add_parser("simulate", help="write one scenario JSON")
    common(p_sim)
    p_sim.add_argument("--run", type=int, default=0,
                       help="which Monte Carlo run's scenario to emit (default 0)")

    p_run = sub.add_parser("run", help="run the configured experiment")
    common(p_run)
    p_run.add_argument("--timing", action="store_true",
                       help="record wall-clock times (makes outputs non-reproducible)")

    p_score = sub.add_parser("score", help="GOSPA of stored estimates vs scenario truth")
    common(p_score, config_required=False)
    p_score.add_argument("--scenario", required=True, help="scenario JSON path")
    p_score.add_argument("--estimates", required=True, help="estimates JSON path")

    p_sum = sub.add_parser("summarize", help="aggregate a results CSV")
    common(p_sum, config_required=False)
    p_sum.add_argument("--results", required=True, help="results.csv path")
    return parser


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    scenario = generate_scenario(cfg.model, seed=[seed, args.run])
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "scenario.json")
    save_scenario(scenario, path)
    print(path)
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    summary = run_experiment(cfg, args.out, timing=args.timing)
    print(render_table(summary))
    for failure in summary["failed_runs"]:
        print(f"excluded run {failure['run']} ({failure['method']}): {failure['error']}",
              file=sys.stderr)
    return 0


def _cmd_score(args) -> int:
    scenario = load_scenario(args.scenario)
    with open(args.estimates) as fh:
        data = json.load(fh)
    if data.get("schema") != ESTIMATES_SCHEMA:
        raise ConfigError(f"{args.estimates}: expected schema {ESTIMATES_SCHEMA!r}")
    estimates = np.asarray(data["estimates"], dtype=float)
    gospa_cfg = load_config(args.config).gospa if args.config else GospaConfig()
    results = score_scenario(scenario, estimates, gospa_cfg)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "gospa.csv")
    with open(path, "w") as fh:
        fh.write("step,gospa,loc,missed,false\n")
        for step, r in enumerate(results):
            fh.write(f"{step},{r.value!r},{r.localisation!r},{r.missed!r},{r.false!r}\n")
    mean = float(np.mean([r.value for r in results]))
    print(f"{path} (mean GOSPA {mean:.3f})")
    return 0


def _cmd_summarize(args) -> int:
    records = read_results_csv(args.results)
    if not records:
        raise ConfigError(f"{args.results}: no records")
    runs = len({r.run for r in records})
    summary = summarize_records(records, runs=runs)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "summary.json")
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(render_table(summary))
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "run": _cmd_run,
    "score": _cmd_score,
    "summarize": _cmd_summarize,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
