import json
from dataclasses import replace

import pytest

from adaptive_fov import cli, scenario
from adaptive_fov.scenario import ScenarioConfig, load_config, read_trace, save_config


@pytest.fixture
def short_config(tmp_path):
    cfg = ScenarioConfig()
    cfg = replace(cfg, trajectory=replace(cfg.trajectory, duration=1.0))
    path = tmp_path / "short.json"
    save_config(cfg, path)
    return path


def test_run_writes_trace_and_summary(tmp_path, short_config, capsys):
    trace, summary = tmp_path / "t.csv", tmp_path / "s.json"
    code = cli.main(["run", "--config", str(short_config), "--adaptive", "off", "--seed", "3",
                     "--trace", str(trace), "--summary", str(summary)])
    assert code == 0
    data = json.loads(summary.read_text())
    assert data["seed"] == 3 and data["adaptive"] is False
    assert len(read_trace(trace)) == data["ticks"] == 32
    assert "duty_ratio=" in capsys.readouterr().out


def test_compare_reports_gap(tmp_path, short_config, capsys):
    out = tmp_path / "c.json"
    assert cli.main(["compare", "--config", str(short_config), "--summary", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["duty_ratio_gap"] == pytest.approx(
        data["adaptive"]["duty_ratio"] - data["non_adaptive"]["duty_ratio"])
    assert "gap:" in capsys.readouterr().out


def test_check_jacobians_small(capsys):
    assert cli.main(["check-jacobians", "--trials", "2"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "all Jacobians" in out


def test_default_config_round_trips(tmp_path, capsys):
    path = tmp_path / "d.json"
    assert cli.main(["default-config", str(path)]) == 0
    assert load_config(path) == ScenarioConfig()
    assert cli.main(["default-config"]) == 0
    assert ScenarioConfig.from_dict(json.loads(capsys.readouterr().out)) == ScenarioConfig()


def test_shipped_configs_load():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    assert load_config(root / "default.json") == ScenarioConfig()
    assert load_config(root / "quick.json").trajectory.duration < 60.0


def test_missing_config_exits_one(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "nope.json")]) == 1
    assert "nope.json" in capsys.readouterr().err


@pytest.mark.parametrize("exc, code", [(scenario.InfeasibleInitialization, 2),
                                       (scenario.QpFailureBudgetExceeded, 3)])
def test_failure_exit_codes(monkeypatch, short_config, exc, code):
    def boom(*args, **kwargs):
        raise exc("forced")

    monkeypatch.setattr(scenario, "run_scenario", boom)
    assert cli.main(["run", "--config", str(short_config)]) == code


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as info:
        cli.main(["fly"])
    assert info.value.code == 2
