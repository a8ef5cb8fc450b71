import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from riskcbf.cli import main
from riskcbf.config import ConfigError, load_config
from riskcbf.field import FieldGrid
from riskcbf.risk import CPT, CVaR, ExpectedRisk
from riskcbf.sim import single_obstacle_scenario

REPO = Path(__file__).resolve().parent.parent
CONFIGS = REPO / "configs"


# --- config parsing ------------------------------------------------------------


def test_shipped_configs_load():
    for name in ("single_obstacle.cfg", "multi_obstacle.cfg", "field_default.cfg"):
        cfg = load_config(CONFIGS / name)
        assert cfg.field_params().k1 == 200.0
        assert cfg.specs()


def test_single_config_matches_factory_scenario():
    cfg = load_config(CONFIGS / "single_obstacle.cfg")
    built = cfg.scenario(ExpectedRisk())
    factory = single_obstacle_scenario(ExpectedRisk())
    assert np.allclose(built.agent.position, factory.agent.position)
    assert built.agent.heading == pytest.approx(factory.agent.heading)
    assert np.allclose(built.goal, factory.goal)
    assert built.field == factory.field
    assert built.barrier == factory.barrier
    assert built.dt == factory.dt and built.t_max == factory.t_max
    assert len(built.obstacles) == 1
    assert built.obstacles[0].speed == pytest.approx(factory.obstacles[0].speed)


def test_spec_list_parsing():
    cfg = load_config(CONFIGS / "single_obstacle.cfg")
    specs = cfg.specs()
    assert CPT(0.74, 1.0, 0.88, 1.5) in specs
    assert CVaR(0.4) in specs
    assert ExpectedRisk() in specs


def write_cfg(tmp_path, text):
    path = tmp_path / "test.cfg"
    path.write_text(text)
    return path


MINIMAL_FIELD = """
[field]
k1 = 200.0
k2 = 0.01
r_bar = 0.5

[risk]
specs = er

[grid]
xmin = 0.0
xmax = 15.0
ymin = 0.0
ymax = 15.0
nx = 20
ny = 20
source = 10.0, 10.0
"""


def test_unknown_key_reports_line(tmp_path):
    path = write_cfg(tmp_path, "[field]\nk1 = 200.0\nk2 = 0.01\nr_bar = 0.5\nbogus = 3\n")
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert ":5:" in str(err.value)
    assert "bogus" in str(err.value)


def test_unknown_section_reports_line(tmp_path):
    path = write_cfg(tmp_path, "[field]\nk1 = 1.0\nk2 = 1.0\nr_bar = 0.0\n\n[mystery]\nx = 1\n")
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert ":6:" in str(err.value)


def test_duplicate_key_rejected(tmp_path):
    path = write_cfg(tmp_path, "[field]\nk1 = 1.0\nk1 = 2.0\n")
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert ":3:" in str(err.value)


def test_invalid_value_reports_line_and_key(tmp_path):
    path = write_cfg(tmp_path, MINIMAL_FIELD.replace("k2 = 0.01", "k2 = -0.5"))
    cfg = load_config(path)
    with pytest.raises(ConfigError) as err:
        cfg.field_params()
    assert "field.k2" in str(err.value)


def test_bad_spec_string_reports_line(tmp_path):
    path = write_cfg(tmp_path, MINIMAL_FIELD.replace("specs = er", "specs = cvar(2.0)"))
    cfg = load_config(path)
    with pytest.raises(ConfigError):
        cfg.specs()


def test_missing_section_flagged(tmp_path):
    path = write_cfg(tmp_path, MINIMAL_FIELD)
    cfg = load_config(path)
    with pytest.raises(ConfigError) as err:
        cfg.scenario(ExpectedRisk())
    assert "[agent]" in str(err.value)


def test_key_outside_section_rejected(tmp_path):
    path = write_cfg(tmp_path, "k1 = 1.0\n")
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert ":1:" in str(err.value)


# --- CLI -----------------------------------------------------------------------


def test_cli_field_outputs_and_determinism(tmp_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    args = ["field", "--config", str(CONFIGS / "field_default.cfg"), "--spec", "er"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    for name in ("c_mu.csv", "c_sigma.csv", "risk_er.csv", "safe_er.csv", "levelset_er.json"):
        assert (out1 / name).exists()
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    # the ER risk grid is exactly the mean-cost grid
    assert (out1 / "risk_er.csv").read_bytes() == (out1 / "c_mu.csv").read_bytes()


def test_cli_field_json_format(tmp_path):
    out = tmp_path / "json_out"
    code = main(
        [
            "field",
            "--config",
            str(CONFIGS / "field_default.cfg"),
            "--spec",
            "er",
            "--out",
            str(out),
            "--format",
            "json",
        ]
    )
    assert code == 0
    payload = json.loads((out / "risk_er.json").read_text())
    assert payload["resolution"] == [150, 150]


def test_cli_simulate_single_spec(tmp_path):
    out = tmp_path / "sim"
    code = main(
        [
            "simulate",
            "--config",
            str(CONFIGS / "single_obstacle.cfg"),
            "--spec",
            "cvar_q0p4",
            "--out",
            str(out),
            "--format",
            "both",
        ]
    )
    assert code == 0
    assert (out / "sim_cvar_q0p4.csv").exists()
    payload = json.loads((out / "sim_cvar_q0p4.json").read_text())
    assert payload["summary"]["reached_goal"] is True
    assert payload["summary"]["min_h"] >= 0.0


def test_cli_simulate_summary_table(tmp_path):
    out = tmp_path / "sweep"
    code = main(
        [
            "simulate",
            "--config",
            str(CONFIGS / "single_obstacle.cfg"),
            "--spec",
            "cvar",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    lines = (out / "summary.csv").read_text().strip().splitlines()
    assert len(lines) == 7  # header + six cvar specs


def test_cli_audit(tmp_path):
    out = tmp_path / "audit"
    code = main(
        ["audit", "--config", str(CONFIGS / "field_default.cfg"), "--out", str(out)]
    )
    assert code == 0
    report = json.loads((out / "audit.json").read_text())
    assert report["inclusiveness"]["cpt_vs_cvar"]["verdict"] == "strictly more inclusive"
    assert report["inclusiveness"]["cpt_vs_er"]["verdict"] == "strictly more inclusive"
    assert report["inclusiveness"]["cvar_vs_er"]["verdict"] in (
        "more inclusive",
        "strictly more inclusive",
    )
    assert report["versatility"]["cpt"]["achieved"]
    assert all(report["versatility"]["cpt"]["achieved"])


def test_cli_feasibility(tmp_path):
    out = tmp_path / "feas"
    code = main(
        [
            "feasibility",
            "--config",
            str(CONFIGS / "single_obstacle.cfg"),
            "--out",
            str(out),
            "--seed",
            "7",
        ]
    )
    assert code == 0
    report = json.loads((out / "feasibility.json").read_text())
    assert report["states"]
    state = report["states"][0]
    assert "er" in state["margins"]
    assert state["margins"]["er"]["eta"] is not None
    assert "probe_counts" in state
    # the insensitive CPT members admit at least as many samples as ER
    counts = state["probe_counts"]
    assert counts["cpt_a0p74_b1_g0p785_l2p25"] >= counts["er"]


def test_cli_config_error_exit_code(tmp_path):
    bad = write_cfg(tmp_path, "[field]\nk1 = -5\nk2 = 0.01\nr_bar = 0.5\n")
    code = main(["field", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert code == 2


def test_cli_missing_config_exit_code(tmp_path):
    code = main(["field", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)])
    assert code == 2


def test_cli_unmatched_spec_selector(tmp_path):
    code = main(
        [
            "simulate",
            "--config",
            str(CONFIGS / "single_obstacle.cfg"),
            "--spec",
            "zzz",
            "--out",
            str(tmp_path / "o"),
        ]
    )
    assert code == 2


def test_cli_runtime_error_exit_code(tmp_path):
    # agent starting inside the risky set is a runtime failure, not a
    # config syntax error
    text = (CONFIGS / "single_obstacle.cfg").read_text()
    text = text.replace("start = 5.0, 2.0", "start = 12.9, 12.9")
    bad = write_cfg(tmp_path, text)
    code = main(["simulate", "--config", str(bad), "--spec", "er", "--out", str(tmp_path / "o")])
    assert code == 3


def test_cli_spec_index_selector(tmp_path):
    out = tmp_path / "one"
    code = main(
        [
            "field",
            "--config",
            str(CONFIGS / "field_default.cfg"),
            "--spec",
            "1",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    assert (out / "risk_er.csv").exists()


def test_cli_entry_point_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "riskcbf", "field", "--help"],
        capture_output=True,
        text=True,
        cwd=REPO,
    )
    assert proc.returncode == 0
    assert "--config" in proc.stdout


def test_grid_csv_header_round_trip(tmp_path):
    out = tmp_path / "f"
    main(["field", "--config", str(CONFIGS / "field_default.cfg"), "--spec", "er", "--out", str(out)])
    grid = FieldGrid.from_csv(out / "c_mu.csv")
    assert (grid.nx, grid.ny) == (150, 150)
    assert grid.values.max() == pytest.approx(200.0, abs=0.05)


def test_cli_simulate_lambda_sweep_logs(tmp_path):
    # the gamma=0.88 lambda sweep: five logs, all barrier-nonnegative
    out = tmp_path / "lam"
    code = main(
        [
            "simulate",
            "--config",
            str(CONFIGS / "single_obstacle.cfg"),
            "--spec",
            "g0p88",
            "--out",
            str(out),
            "--format",
            "json",
        ]
    )
    assert code == 0
    logs = sorted(out.glob("sim_cpt_a0p74_b1_g0p88_l*.json"))
    assert len(logs) == 5
    for path in logs:
        summary = json.loads(path.read_text())["summary"]
        assert summary["reached_goal"] is True
        assert summary["min_h"] >= 0.0


def test_cli_simulate_without_obstacles_goes_straight(tmp_path):
    text = (CONFIGS / "single_obstacle.cfg").read_text()
    head, _, _ = text.partition("[obstacle.1]")
    cfg = write_cfg(tmp_path, head)
    out = tmp_path / "free"
    code = main(
        ["simulate", "--config", str(cfg), "--spec", "er", "--out", str(out), "--format", "json"]
    )
    assert code == 0
    payload = json.loads((out / "sim_er.json").read_text())
    assert payload["summary"]["reached_goal"] is True
    assert payload["summary"]["total_deviation"] == 0.0
    assert payload["summary"]["min_h"] is None  # no obstacles: barrier unbounded
