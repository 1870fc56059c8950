from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from irrevvi import artifacts, cli
from irrevvi.config import ConfigError, parse_config, validate_dict

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = {"mesh": {"dim": 1, "nodes": [11]}, "time": {"T": 1.0, "m": 4},
           "forcing": {"preset": "stationary"}}


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


def test_minimal_config_gets_defaults():
    cfg = validate_dict(MINIMAL)
    assert cfg.sigma == 0.5 and cfg.seed == 0
    assert cfg.mesh["extent"] == [1.0]
    assert cfg.mesh["boundary"] == {"left": "dirichlet", "right": "dirichlet"}
    assert cfg.initial["preset"] == "equilibrium"
    assert cfg.solver["method"] == "pdas"


def test_unknown_key_is_named_with_its_path():
    raw = json.loads(json.dumps(MINIMAL))
    raw["solver"] = {"methd": "psor"}
    with pytest.raises(ConfigError) as info:
        validate_dict(raw)
    assert "solver.methd: unknown key" in info.value.errors
    cfg = validate_dict(raw, strict=False)
    assert cfg.warnings == ["solver.methd: unknown key ignored"]


def test_all_errors_are_collected():
    raw = {"mesh": {"dim": 2, "nodes": [4]}, "time": {"T": -1, "m": 0},
           "forcing": {"preset": "nope"}, "sigma": "big", "extra": 1}
    with pytest.raises(ConfigError) as info:
        validate_dict(raw)
    text = "\n".join(info.value.errors)
    for frag in ("mesh.nodes", "time.T", "time.m", "forcing.preset", "sigma", "extra: unknown key"):
        assert frag in text


def test_missing_sections_and_empty_trajectory():
    with pytest.raises(ConfigError) as info:
        validate_dict({"mesh": {"dim": 1, "nodes": [5]}})
    assert {"time: required section missing", "forcing: required section missing"} <= set(info.value.errors)
    with pytest.raises(ConfigError, match="empty trajectory"):
        validate_dict({**MINIMAL, "time": {"T": 1.0, "m": 0}})


def test_preset_params_checked():
    with pytest.raises(ConfigError, match="forcing.params.speed2"):
        validate_dict({**MINIMAL, "forcing": {"preset": "moving", "params": {"speed2": 1}}})


def test_canonical_round_trip(tmp_path):
    for path in sorted(CONFIGS.glob("*.json")):
        cfg = parse_config(path)
        again = parse_config(write(tmp_path, json.loads(cfg.canonical())))
        assert again == cfg
        assert again.canonical() == cfg.canonical()


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{ not json")
    with pytest.raises(ConfigError, match="malformed"):
        parse_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "missing.json")


def test_csv_format_and_exact_reingestion():
    from irrevvi import presets
    ops = presets.mesh_2d(4)
    z = np.random.default_rng(0).normal(size=ops.n) / 3
    text = artifacts.field_rows(ops, [0.0, 0.1], [z, z * np.pi])
    assert text.split("\n")[0].startswith("t,node_0_0,node_0_1")
    assert "\r" not in text and text.endswith("\n")
    labels, times, values = artifacts.read_field_csv(text)
    assert len(labels) == 16 and list(times) == [0.0, 0.1]
    np.testing.assert_array_equal(ops.from_grid(values[1]), z * np.pi)


def test_json_is_strict_and_sorted():
    text = artifacts.json_text({"b": float("inf"), "a": np.float64(1.5)})
    obj = json.loads(text)
    assert obj == {"a": 1.5, "b": "inf", "schema_version": 1}
    assert text.index('"a"') < text.index('"b"')


def test_run_stationary_reports_no_drift(tmp_path):
    code = cli.main([ "run", "--config", str(CONFIGS / "stationary.json"), "--out", str(tmp_path), "-q"])
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    drift = [r for r in rep["reports"] if r["name"] == "no_evolution"][0]["checks"][0]
    assert drift["passed"] and drift["value"] <= 1e-9
    header = (tmp_path / "trajectory.csv").read_text().split("\n")[0]
    assert header == "t," + ",".join(f"x{i}" for i in range(41))


def test_validate_pure_neumann_fails_naming_assumption(tmp_path, caplog):
    code = cli.main(["validate", "--config", str(CONFIGS / "pure_neumann.json"), "--out", str(tmp_path)])
    assert code == 1
    rep = (tmp_path / "report.json").read_text()
    assert "assumption (i) violated" in rep
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["criteria"]["validate_problem.coercivity"] is False


def test_repeated_runs_are_byte_identical(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"o{i}"
        assert cli.main(["run", "--config", str(CONFIGS / "moving_1d.json"), "--out", str(out),
                         "--seed", "99", "-q"]) == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    assert names == sorted(p.name for p in outs[1].iterdir())
    for n in names:
        assert (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()
    assert json.loads((outs[0] / "summary.json").read_text())["seed"] == 99


def test_env_var_overrides_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["validate", "--config", str(CONFIGS / "stationary.json"), "-q"]) == 0
    assert (tmp_path / "env" / "summary.json").exists()
    assert cli.main(["validate", "--config", str(CONFIGS / "stationary.json"), "--out",
                     str(tmp_path / "flag"), "-q"]) == 0
    assert (tmp_path / "flag" / "summary.json").exists()


def test_solver_failure_marks_outputs_incomplete(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(CONFIGS / "moving_1d.json"), "--out", str(out), "-q"]) == 0
    _, _, values = artifacts.read_field_csv((out / "trajectory.csv").read_text())
    raw = json.loads((CONFIGS / "moving_1d.json").read_text())
    raw["initial"] = {"tabulated": list(values[0])}
    raw["solver"] = {"method": "psor", "omega": 0.5, "max_iter": 1}
    code = cli.main(["run", "--config", str(write(tmp_path, raw)), "--out", str(out), "-q"])
    assert code == cli.EXIT_ABORT
    summary = json.loads((out / "summary.json").read_text())
    assert summary["complete"] is False and summary["step"] >= 1
    assert (out / artifacts.INCOMPLETE_MARKER).exists()
    assert not (out / "trajectory.csv").exists()


def test_config_error_exit_code(tmp_path):
    p = write(tmp_path, {**MINIMAL, "bogus": 1})
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o"), "--lenient", "-q"]) == 0
    with pytest.raises(SystemExit):
        cli.main(["explode", "--config", str(p)])
    assert cli.main(["run", "--config", str(p), "--seed", "-1"]) == cli.EXIT_CONFIG


def test_oracle_check_command(tmp_path):
    raw = {**MINIMAL, "study": {"instances": 15, "max_n": 8}, "seed": 5}
    code = cli.main(["oracle-check", "--config", str(write(tmp_path, raw)), "--out", str(tmp_path / "o"), "-q"])
    assert code == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())["reports"][0]
    assert rep["data"]["agreed"] == 15 and rep["data"]["seed"] == 5


def test_tabulated_forcing_and_initial(tmp_path):
    nodes = 9
    x = np.linspace(0, 1, nodes)
    raw = {"mesh": {"dim": 1, "nodes": [nodes]}, "time": {"T": 1.0, "m": 4},
           "forcing": {"tabulated": {"times": [0.0, 1.0],
                                     "values": [list(0.5 + 0 * x), list(-1.0 + 0 * x)]}},
           "initial": {"tabulated": [0.0] * nodes}}
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(write(tmp_path, raw)), "--out", str(out), "-q"]) == 0
    _, times, values = artifacts.read_field_csv((out / "trajectory.csv").read_text())
    assert values[-1].min() < 0 and np.all(np.diff(values, axis=0) <= 0)
    raw["forcing"]["tabulated"]["times"] = [0.0, 0.5]
    assert cli.main(["run", "--config", str(write(tmp_path, raw)), "--out", str(out), "-q"]) == cli.EXIT_CONFIG
    raw["initial"]["tabulated"] = [0.0] * 3
    with pytest.raises(ConfigError, match="initial.tabulated"):
        validate_dict(raw)


@pytest.mark.parametrize("command,config", [
    ("equilibrium", "exp_relax"), ("compare", "compare"), ("convergence", "convergence"),
])
def test_other_commands(tmp_path, command, config):
    assert cli.main([command, "--config", str(CONFIGS / f"{config}.json"), "--out", str(tmp_path), "-q"]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["complete"] and summary["passed"]


def test_compare_rejects_unordered_data(tmp_path):
    raw = json.loads((CONFIGS / "compare.json").read_text())
    raw["study"]["compare"]["forcing"]["params"]["base"] = 0.1
    assert cli.main(["compare", "--config", str(write(tmp_path, raw)), "--out", str(tmp_path / "o"), "-q"]) == cli.EXIT_CONFIG
