import json
import os
import subprocess
import sys

import numpy as np
import pytest

from eptrack.cli import main
from eptrack.config import ConfigError, load_config, parse_config_dict
from eptrack.model import load_scenario
from eptrack.runner import ESTIMATES_SCHEMA, read_results_csv


TINY_CONFIG = """
[experiment]
runs = 2
seed = 5
methods = ["DEP", "C-Gibbs20"]
workers = 1

[model]
sensors = 2
targets = 2
steps = 3
clutter_rate = 20.0
target_rate = 4.0

[gibbs]
total_sweeps = 15
burn_in = 5

[dep]
max_iterations = 2
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_CONFIG)
    return path


# ---------------------------------------------------------------------------
# config parsing


def test_preset_dataset1_defaults():
    cfg = parse_config_dict({"experiment": {"preset": "dataset1"}})
    assert cfg.model.n_sensors == 5 and cfg.model.n_targets == 5
    assert [m.name for m in cfg.methods] == ["DEP", "DEP-F", "C-Gibbs50"]
    assert cfg.methods[0].ep.max_iterations == 5
    assert cfg.methods[2].gibbs.total_sweeps == 60  # 50 retained + 10 burn-in
    assert cfg.methods[2].centralized


def test_preset_dataset2_depf_iterations():
    cfg = parse_config_dict({"experiment": {"preset": "dataset2"}})
    by_name = {m.name: m for m in cfg.methods}
    assert by_name["DEP-F"].ep.max_iterations == 10
    assert by_name["DEP"].ep.max_iterations == 5
    assert by_name["C-Gibbs200"].gibbs.total_sweeps == 210


def test_method_name_variants():
    cfg = parse_config_dict(
        {
            "experiment": {"preset": "dataset1", "methods": ["dep", "Dep-F", "c_gibbs_200"]},
        }
    )
    assert [m.name for m in cfg.methods] == ["DEP", "DEP-F", "C-Gibbs200"]


def test_unknown_method_rejected():
    with pytest.raises(ConfigError, match="experiment.methods"):
        parse_config_dict({"experiment": {"preset": "dataset1", "methods": ["GCI"]}})


def test_duplicate_methods_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_dict({"experiment": {"preset": "dataset1", "methods": ["DEP", "dep"]}})


def test_unknown_preset_rejected():
    with pytest.raises(ConfigError, match="experiment.preset"):
        parse_config_dict({"experiment": {"preset": "dataset9"}})


def test_model_required_without_preset():
    with pytest.raises(ConfigError, match="model"):
        parse_config_dict({"experiment": {"methods": ["DEP"]}})


def test_field_path_in_errors():
    with pytest.raises(ConfigError, match=r"experiment\.runs"):
        parse_config_dict({"experiment": {"preset": "dataset1", "runs": 0}})
    with pytest.raises(ConfigError, match=r"model\.clutter_rate"):
        parse_config_dict(
            {"experiment": {"preset": "dataset1"}, "model": {"clutter_rate": -3.0}}
        )
    with pytest.raises(ConfigError, match=r"dep\b"):
        parse_config_dict(
            {"experiment": {"preset": "dataset1"}, "dep": {"damping": 2.0}}
        )
    with pytest.raises(ConfigError, match="unknown config tables"):
        parse_config_dict({"experiment": {"preset": "dataset1"}, "ep": {}})


def test_model_overrides():
    cfg = parse_config_dict(
        {
            "experiment": {"preset": "dataset2"},
            "model": {"sensors": 3, "steps": 10, "region": [0, 500, 0, 500],
                      "topology": "fixed"},
        }
    )
    assert cfg.model.n_sensors == 3
    assert cfg.model.steps == 10
    assert cfg.model.region.area == 500.0**2
    assert cfg.model.topology_kind == "fixed"
    assert cfg.model.target_rates.shape == (3, 8)


def test_load_config_file(tiny_config):
    cfg = load_config(tiny_config)
    assert cfg.runs == 2
    assert cfg.model.steps == 3
    assert [m.name for m in cfg.methods] == ["DEP", "C-Gibbs20"]


def test_load_config_bad_toml(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("[experiment\nruns = 2")
    with pytest.raises(ConfigError):
        load_config(path)


# ---------------------------------------------------------------------------
# CLI


def test_cli_simulate_and_score_roundtrip(tiny_config, tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(tiny_config), "--seed", "3",
                 "--out", str(out)]) == 0
    scenario = load_scenario(out / "scenario.json")
    assert scenario.steps == 3

    # truth used as estimates scores exactly zero
    estimates = scenario.truth[:, :, [0, 2]].tolist()
    est_path = tmp_path / "estimates.json"
    est_path.write_text(json.dumps({"schema": ESTIMATES_SCHEMA, "estimates": estimates}))
    score_out = tmp_path / "score"
    assert main(["score", "--scenario", str(out / "scenario.json"),
                 "--estimates", str(est_path), "--out", str(score_out)]) == 0
    rows = (score_out / "gospa.csv").read_text().strip().splitlines()
    assert rows[0] == "step,gospa,loc,missed,false"
    for row in rows[1:]:
        assert float(row.split(",")[1]) == 0.0


def test_cli_run_outputs_and_determinism(tiny_config, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(tiny_config), "--seed", "9",
                 "--out", str(out1)]) == 0
    assert main(["run", "--config", str(tiny_config), "--seed", "9",
                 "--out", str(out2)]) == 0
    csv1 = (out1 / "results.csv").read_bytes()
    csv2 = (out2 / "results.csv").read_bytes()
    assert csv1 == csv2
    assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()

    records = read_results_csv(out1 / "results.csv")
    # one row per (run, method, step, sensor); centralised methods use -1
    dep_rows = [r for r in records if r.method == "DEP"]
    cg_rows = [r for r in records if r.method == "C-Gibbs20"]
    assert len(dep_rows) == 2 * 3 * 2
    assert len(cg_rows) == 2 * 3
    assert all(r.ci == 2.0 for r in dep_rows)  # CI = I_max per step
    assert all(r.sensor == -1 and r.ci == -1.0 for r in cg_rows)
    assert all(r.wall_ms == 0.0 for r in records)  # timing off by default

    summary = json.loads((out1 / "summary.json").read_text())
    assert summary["methods"]["DEP"]["mean_ci"] == pytest.approx(2.0)
    assert summary["methods"]["C-Gibbs20"]["mean_ci"] is None


def test_cli_summarize_matches_run_summary(tiny_config, tmp_path):
    out = tmp_path / "run"
    main(["run", "--config", str(tiny_config), "--out", str(out)])
    sum_out = tmp_path / "sum"
    assert main(["summarize", "--results", str(out / "results.csv"),
                 "--out", str(sum_out)]) == 0
    a = json.loads((out / "summary.json").read_text())
    b = json.loads((sum_out / "summary.json").read_text())
    for name in a["methods"]:
        assert b["methods"][name]["mean_gospa"] == pytest.approx(
            a["methods"][name]["mean_gospa"]
        )
        assert b["methods"][name]["std_gospa"] == pytest.approx(
            a["methods"][name]["std_gospa"]
        )


def test_cli_seed_changes_results(tiny_config, tmp_path):
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    main(["run", "--config", str(tiny_config), "--seed", "1", "--out", str(out1)])
    main(["run", "--config", str(tiny_config), "--seed", "2", "--out", str(out2)])
    assert (out1 / "results.csv").read_bytes() != (out2 / "results.csv").read_bytes()


def test_cli_exit_codes(tiny_config, tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["--bogus-flag"]) == 2
    assert main(["run", "--config", str(tiny_config), "--bogus"]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[experiment]\npreset = 'nope'\n")
    assert main(["run", "--config", str(bad)]) == 2


def test_cli_module_entry_point(tiny_config, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "eptrack.cli", "simulate", "--config",
         str(tiny_config), "--out", str(tmp_path / "m")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert (tmp_path / "m" / "scenario.json").exists()
