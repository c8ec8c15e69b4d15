import json
import math

import pytest
import yaml

from adptrack.cli import dispatch
from adptrack.commands import (EXIT_CONFIG, EXIT_DIVERGED, EXIT_GAINS, EXIT_OK, parse_assignment)
from adptrack.commands.simulate import _sweep_values
from adptrack.errors import ConfigError
from tests.conftest import CONFIGS

SHORT = ["--set", "sim.T=0.2", "--set", "sim.dt=0.01"]


def _cfg(name):
    return str(CONFIGS / f"{name}.json")


def test_simulate_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    code = dispatch(["simulate", "--config", _cfg("scalar_lq"), "--out", str(out), *SHORT])
    assert code == EXIT_OK
    for name in ("effective_config.json", "trace.csv", "stack.csv", "metrics.json", "run.log"):
        assert (out / name).exists(), name
    summary = json.loads((out / "metrics.json").read_text())
    assert summary["rows"] == 21
    assert summary["diverged"] is False
    assert summary["w_ideal"] == [pytest.approx(math.sqrt(2.0) - 1.0)]
    effective = json.loads((out / "effective_config.json").read_text())
    assert effective["sim"]["T"] == 0.2
    assert str(out) in capsys.readouterr().out


def test_simulate_is_reproducible(tmp_path):
    args = ["simulate", "--config", _cfg("scalar_lq"), *SHORT, "--set", "adp.grid.layout=halton"]
    assert dispatch([*args, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert dispatch([*args, "--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("trace.csv", "stack.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_divergence_exit_code(tmp_path):
    code = dispatch(["simulate", "--config", _cfg("scalar_lq"), "--out", str(tmp_path),
                     *SHORT, "--set", "sim.divergence_bound=1.0"])
    assert code == EXIT_DIVERGED
    assert json.loads((tmp_path / "metrics.json").read_text())["diverged"] is True


def test_simulate_bad_config(tmp_path, capsys):
    code = dispatch(["simulate", "--config", _cfg("scalar_lq"), "--out", str(tmp_path),
                     "--set", "adp.gains.eta_c1=-1"])
    assert code == EXIT_CONFIG
    assert "adp.gains.eta_c1" in capsys.readouterr().err


def test_simulate_missing_config(tmp_path):
    assert dispatch(["simulate", "--config", str(tmp_path / "none.json")]) == EXIT_CONFIG


def test_sweep_runs_each_value(tmp_path):
    code = dispatch(["simulate", "--config", _cfg("scalar_lq"), "--out", str(tmp_path), *SHORT,
                     "--sweep", "adp.gains.nu=0.05,0.2"])
    assert code == EXIT_OK
    for value in ("0.05", "0.2"):
        summary = json.loads((tmp_path / f"nu={value}" / "metrics.json").read_text())
        assert summary["rows"] == 21
    effective = json.loads((tmp_path / "nu=0.2" / "effective_config.json").read_text())
    assert effective["adp"]["gains"]["nu"] == 0.2


def test_sweep_values_parsing():
    assert _sweep_values("adp.gains.nu=0.05, 0.1") == ("adp.gains.nu", [0.05, 0.1])
    with pytest.raises(ConfigError):
        _sweep_values("adp.gains.nu")
    with pytest.raises(ConfigError):
        _sweep_values("adp.gains.nu=")


def test_parse_assignment():
    assert parse_assignment("sim.x0=[1, 2]") == ("sim.x0", [1, 2])
    assert parse_assignment("adp.grid.layout=halton") == ("adp.grid.layout", "halton")
    with pytest.raises(ConfigError):
        parse_assignment("novalue")


def test_check_gains_certified_passes(capsys):
    code = dispatch(["check-gains", "--config", _cfg("scalar_lq_certified")])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert "critic_gain" in out and "PASS" in out
    doc = yaml.safe_load(out)
    assert doc["passed"] is True


def test_check_gains_counterexample_fails(capsys):
    code = dispatch(["check-gains", "--config", _cfg("gain_counterexample"), "--format", "json"])
    assert code == EXIT_GAINS
    doc = json.loads(capsys.readouterr().out)
    critic = next(c for c in doc["conditions"] if c["name"] == "critic_gain")
    assert critic["passed"] is False


def test_check_gains_json_with_infinite_threshold(capsys):
    code = dispatch(["check-gains", "--config", _cfg("scalar_lq_certified"), "--format", "json",
                     "--set", "identifier.k_theta=0"])
    assert code == EXIT_GAINS
    text = capsys.readouterr().out
    doc = json.loads(text, parse_constant=lambda name: pytest.fail(f"bare {name}"))
    critic = next(c for c in doc["conditions"] if c["name"] == "critic_gain")
    assert critic["rhs"] == "inf"
    assert critic["passed"] is False


def test_check_gains_needs_bounds(capsys):
    code = dispatch(["check-gains", "--config", _cfg("scalar_lq")])
    assert code == EXIT_CONFIG
    assert "gains_check.assumptions" in capsys.readouterr().err


def test_check_gains_with_measured_bounds(capsys):
    code = dispatch(["check-gains", "--config", _cfg("scalar_lq"), "--simulate", *SHORT,
                     "--samples", "32", "--format", "json"])
    assert code in (EXIT_OK, EXIT_GAINS)
    doc = json.loads(capsys.readouterr().out)
    assert doc["estimates"]["sources"]["gamma_lb"] == "measured"
    assert doc["estimates"]["sources"]["sigma_theta_lb"] == "measured"


def test_oracle_prints_riccati_solution(capsys):
    code = dispatch(["oracle", "--config", _cfg("scalar_lq"), "--format", "json"])
    assert code == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["P"][0][0] == pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-10)
    assert doc["W"] == [pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-10)]
    assert doc["basis"] == ["e1^2"]


def test_oracle_rejects_nonlinear_scenario(capsys):
    assert dispatch(["oracle", "--config", _cfg("twostate_nl")]) == EXIT_CONFIG


def test_schema_command(capsys):
    assert dispatch(["schema", "--format", "json"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert "ScenarioConfig" in doc["components"]["schemas"]


def test_selftest_passes(capsys):
    assert dispatch(["selftest"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "bellman_identity" in out


def test_unknown_command_is_usage_error():
    assert dispatch(["frobnicate"]) == EXIT_CONFIG


def test_help_exits_ok():
    assert dispatch(["--help"]) == EXIT_OK
