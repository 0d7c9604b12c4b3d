import json
import math
from dataclasses import replace

import numpy as np
import pytest

from adaptive_fov import qp, scenario
from adaptive_fov.scenario import (SKIPPED, TRACE_COLUMNS, InfeasibleInitialization,
                                   NoiseConfig, PerturbationConfig, QpFailureBudgetExceeded,
                                   ScenarioConfig, TraceRecord, TrajectoryConfig,
                                   circle_trajectory, emit_summary, emit_trace, load_config,
                                   param_hash, read_trace, run_scenario, save_config)

SUMMARY_KEYS = {"schema_version", "seed", "adaptive", "ticks", "tick_rate", "duration_s",
                "duty_ratio", "estimated_duty_ratio", "max_deviation_deg", "max_fov_angle_deg",
                "mean_y_err_last_quarter", "min_estimated_fov_margin", "max_lyapunov_rate",
                "final_param_error", "initial_param_error", "control_failures",
                "adaptation_failures", "measurement_dropouts", "final_param_hash"}


def short(cfg=None, duration=5.0, **kw):
    cfg = cfg or ScenarioConfig()
    return replace(cfg, trajectory=replace(cfg.trajectory, duration=duration), **kw)


def exact(cfg):
    return replace(cfg, perturbation=PerturbationConfig(0.0, 0.0, 0.0, 0.0),
                   noise=NoiseConfig(0.0, False))


@pytest.fixture(scope="module")
def quick_pair():
    cfg = short(duration=10.0)
    return run_scenario(cfg, adaptive=True), run_scenario(cfg, adaptive=False)


def test_circle_trajectory_examples():
    traj = TrajectoryConfig()
    c = np.array(traj.center)
    p0, r = circle_trajectory(0.0, traj)
    np.testing.assert_allclose(p0, c + [traj.radius, 0, 0], atol=1e-15)
    np.testing.assert_allclose(circle_trajectory(traj.period / 2, traj)[0], c - [traj.radius, 0, 0],
                               atol=1e-15)
    np.testing.assert_allclose(circle_trajectory(traj.period, traj)[0], p0, atol=1e-12)
    np.testing.assert_array_equal(r, traj.tool_rotation)
    for t in np.linspace(0, 60, 13):
        p, _ = circle_trajectory(t, traj)
        assert np.linalg.norm(p[:2] - c[:2]) == pytest.approx(traj.radius)
        assert p[2] == c[2]


def test_trajectory_validation():
    with pytest.raises(ValueError):
        TrajectoryConfig(radius=0.0)
    with pytest.raises(ValueError):
        TrajectoryConfig(period=-1.0)


def test_exact_model_without_adaptation_keeps_full_duty():
    res = run_scenario(exact(short(duration=10.0)), adaptive=False)
    assert res.summary["duty_ratio"] == 1.0
    assert all(r.adapt_status == SKIPPED for r in res.trace)
    assert len({r.param_hash for r in res.trace}) == 1
    assert res.summary["final_param_error"]["total"] == 0.0


def test_exact_model_with_adaptation_barely_moves():
    res = run_scenario(exact(short(duration=3.0)), adaptive=True)
    assert res.summary["duty_ratio"] == 1.0
    assert np.linalg.norm(res.a_hat - res.plant.a_nominal) < 1e-9
    assert all(r.y_err < 1e-12 for r in res.trace)


def test_summary_fields(quick_pair):
    on, off = quick_pair
    for res in (on, off):
        assert set(res.summary) == SUMMARY_KEYS
        assert res.summary["ticks"] == len(res.trace) == 320
        assert res.summary["control_failures"] == 0
        assert res.summary["min_estimated_fov_margin"] >= -1e-6
    assert on.summary["adaptive"] and not off.summary["adaptive"]
    assert on.summary["max_lyapunov_rate"] <= 1e-9


def test_trace_invariants(quick_pair):
    on, _ = quick_pair
    times = [r.time for r in on.trace]
    assert all(b > a for a, b in zip(times, times[1:]))
    for r in on.trace:
        assert r.in_real_fov in (True, False)
        assert r.in_estimated_fov == (r.g_fov_est >= 0.0)
        if r.control_status == qp.OPTIMAL:
            assert r.g_fov_est >= -1e-6


def test_adaptation_reduces_late_residual(quick_pair):
    on, off = quick_pair
    assert on.summary["mean_y_err_last_quarter"] < off.summary["mean_y_err_last_quarter"]
    assert (on.summary["final_param_error"]["camera"]
            < on.summary["initial_param_error"]["camera"])


def test_same_seed_same_trace(tmp_path):
    cfg = short(duration=2.0)
    paths = []
    for i in range(2):
        res = run_scenario(cfg)
        paths.append(tmp_path / f"t{i}.csv")
        emit_trace(res.trace, paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()
    other = run_scenario(replace(cfg, seed=2))
    emit_trace(other.trace, tmp_path / "t2.csv")
    assert (tmp_path / "t2.csv").read_bytes() != paths[0].read_bytes()


def test_trace_round_trip(tmp_path, quick_pair):
    trace = quick_pair[0].trace
    path = tmp_path / "trace.csv"
    emit_trace(trace, path)
    rows = read_trace(path)
    assert len(rows) == len(trace)
    for rec, row in zip(trace, rows):
        assert row["tick"] == rec.tick and row["time"] == rec.time
        assert [row[f"q{r}_{j}"] for r in (1, 2) for j in range(1, 9)] == list(rec.q)
        for key in ("t1_err", "r1_err", "t2_err", "g_fov_true", "theta_fov_deg", "g_fov_est",
                    "lyapunov_rate"):
            assert row[key] == getattr(rec, key)
        if rec.pixel is None:
            assert row["pixel_u"] is None and math.isnan(row["y_err"])
        else:
            assert (row["pixel_u"], row["pixel_v"]) == rec.pixel and row["y_err"] == rec.y_err
        assert row["param_hash"] == rec.param_hash
        assert row["constraint_mask"] == rec.constraint_mask
        assert row["adapt_status"] == rec.adapt_status


def test_parameter_dump_round_trip(tmp_path):
    res = run_scenario(short(duration=0.25, dump_parameters=True))
    path = tmp_path / "dump.csv"
    emit_trace(res.trace, path)
    rows = read_trace(path)
    a = np.array([rows[-1][f"a{r}_{i}"] for r in (1, 2) for i in range(44)])
    np.testing.assert_array_equal(a, res.trace[-1].a_hat)
    assert param_hash(a) == rows[-1]["param_hash"]


def test_empty_trace_is_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    emit_trace([], path)
    assert path.read_text() == ",".join(TRACE_COLUMNS) + "\n"
    assert read_trace(path) == []


def test_io_errors_name_the_path(tmp_path):
    bad = tmp_path / "missing" / "x.csv"
    with pytest.raises(OSError, match="missing"):
        emit_trace([], bad)
    with pytest.raises(OSError, match="missing"):
        emit_summary({}, bad)
    with pytest.raises(OSError, match="missing"):
        load_config(bad)


def test_summary_json_is_sorted_and_stable(tmp_path, quick_pair):
    path = tmp_path / "s.json"
    emit_summary(quick_pair[0].summary, path)
    data = json.loads(path.read_text())
    assert list(data) == sorted(data)
    assert data == json.loads(json.dumps(quick_pair[0].summary))


def test_config_round_trip(tmp_path):
    cfg = ScenarioConfig()
    path = tmp_path / "c.json"
    save_config(cfg, path)
    assert load_config(path) == cfg
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg


def test_config_rejects_unknown_keys_and_versions():
    data = ScenarioConfig().to_dict()
    with pytest.raises(ValueError, match="unknown"):
        ScenarioConfig.from_dict({**data, "colour": 1})
    with pytest.raises(ValueError, match="unknown keys in 'noise'"):
        ScenarioConfig.from_dict({**data, "noise": {"sigma": 1.0}})
    with pytest.raises(ValueError, match="version"):
        ScenarioConfig.from_dict({**data, "version": 99})
    with pytest.raises(ValueError):
        ScenarioConfig(robots=[])


def test_config_file_must_be_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("robots: []")
    with pytest.raises(ValueError, match="JSON"):
        load_config(path)


def test_infeasible_initialization_aborts():
    cfg = ScenarioConfig()
    huge = replace(cfg, perturbation=PerturbationConfig(0.0, 0.0, 0.01, 3.0))
    with pytest.raises(InfeasibleInitialization):
        run_scenario(short(huge, duration=1.0))


def test_qp_failure_budget(monkeypatch):
    def failing(problem, warm_start=None, max_iter=None, tol=1e-12):
        n = problem.n
        return qp.QpSolution(np.zeros(n), qp.INFEASIBLE, math.inf, np.zeros(problem.A.shape[0]),
                             np.zeros(problem.C.shape[0]))

    monkeypatch.setattr(qp, "solve", failing)
    with pytest.raises(QpFailureBudgetExceeded):
        run_scenario(short(duration=2.0, max_qp_failures=4))


def test_trace_record_row_width():
    rec = TraceRecord(0, 0.0, np.zeros(16), "h", 0, 0, 0, None, math.nan, 0, 0, 0, True, False,
                      0, "optimal", SKIPPED, 0.0)
    assert len(rec.row()) == len(TRACE_COLUMNS)


def test_activity_mask_bits_are_distinct():
    bits = list(scenario.ACTIVITY_BITS.values())
    assert len(set(bits)) == len(bits)
    assert all(b & (b - 1) == 0 for b in bits)
