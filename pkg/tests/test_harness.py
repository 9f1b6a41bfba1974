import json
import math

import numpy as np
import pytest

from factories import short_log
from mecslam.harness import (ALL_VARIANTS, Trajectory, compute_metrics, run_experiment,
                             run_variant)
from mecslam.harness.cli import load_scenario, main, preset_names
from mecslam.harness.runner import read_metrics, read_trajectory, write_trajectory
from mecslam.harness.stepresponse import step_response
from mecslam.rotation import yaw_quat


def line(n=101, length=10.0, yaw=0.0):
    t = np.linspace(0, 10, n)
    p = np.column_stack([np.linspace(0, length, n), np.zeros(n), np.zeros(n)])
    return Trajectory(t, p, np.tile(yaw_quat(yaw), (n, 1)))


def test_metrics_rate_example():
    truth = Trajectory([0, 1], [[0, 0, 0], [15.149, 0, 0]], [yaw_quat(0)] * 2)
    est = Trajectory([0, 1], [[0, 0, 0], [15.149, 2.137, 0]], [yaw_quat(0)] * 2)
    m = compute_metrics(est, truth)
    assert m.position_error == pytest.approx(2.137)
    assert 100 * m.position_error_rate == pytest.approx(14.11, abs=5e-3)
    assert m.position_error_rate * m.displacement == pytest.approx(m.position_error, rel=1e-9)


def test_metrics_identical():
    m = compute_metrics(line(), line())
    assert m.position_error == 0 and m.heading_error == 0 and m.ate_rmse == 0
    assert m.displacement == pytest.approx(10.0)


def test_metrics_heading_only():
    m = compute_metrics(line(yaw=math.radians(10)), line())
    assert m.heading_error == pytest.approx(10.0)
    assert m.position_error == 0
    assert compute_metrics(line(yaw=math.radians(-10)), line()).heading_error == pytest.approx(-10)


def test_metrics_errors():
    with pytest.raises(ValueError):
        compute_metrics(Trajectory([], np.zeros((0, 3)), np.zeros((0, 4))), line())
    with pytest.raises(ValueError):
        compute_metrics(line(), line(length=0.0))


def test_trajectory_file_round_trip(tmp_path):
    tr = line(yaw=0.3)
    write_trajectory(tmp_path / "t.csv", tr)
    back = read_trajectory(tmp_path / "t.csv")
    np.testing.assert_array_equal(back.p, tr.p)
    np.testing.assert_array_equal(back.q, tr.q)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,px,py,pz,qw,qx,qy,qz"


@pytest.fixture(scope="module")
def log():
    return short_log(duration=6.0)


def test_variants_leave_log_untouched(log):
    before = {k: v.copy() for k, v in vars(log).items() if isinstance(v, np.ndarray)}
    for v in ALL_VARIANTS:
        run_variant(log, v)
    for k, arr in before.items():
        assert np.array_equal(getattr(log, k), arr), k


def test_clean_gated_equals_ungated(log):
    a = run_variant(log, "full-gated")
    b = run_variant(log, "full-ungated")
    assert a.metrics.fused_count == 0
    for k, va in a.metrics.as_dict().items():
        assert abs(va - getattr(b.metrics, k)) <= 1e-6


def test_experiment_deterministic_and_written(tmp_path):
    cfg = load_scenario("clean")
    from dataclasses import replace
    cfg = replace(cfg, duration=5.0)
    a = run_experiment(cfg, ["wheel-odom", "full-gated"], out_dir=tmp_path / "a")
    b = run_experiment(cfg, ["wheel-odom", "full-gated"], out_dir=tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name
    m = read_metrics(tmp_path / "a" / "metrics_full-gated.txt")
    assert m["position_error"] == a.metrics["full-gated"].position_error
    assert set(m) == set(a.metrics["full-gated"].as_dict())
    rows = json.loads((tmp_path / "a" / "verdicts_full-gated.json").read_text())
    assert rows and {"t0", "t1", "fused", "d1", "d2", "d3"} <= set(rows[0])


def test_presets_ship():
    assert {"slip", "collision", "abduction", "clean", "noisy", "controller_step"} <= set(preset_names())


def test_step_response_converges():
    r = step_response(load_scenario("controller_step"))
    assert r.converged and r.error <= 0.02
    assert r.curve.shape[1] == 8


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["simulate", "--scenario", "no-such-preset", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"duration": -3}))
    assert main(["simulate", "--scenario", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "duration" in capsys.readouterr().err
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"duration": 2.0, "commands": [{"t": 0, "twist": [0.3, 0, 0]}]}))
    assert main(["simulate", "--scenario", str(good), "--out", str(tmp_path / "log")]) == 0
    assert main(["estimate", "--log", str(tmp_path / "log"), "--variants", "wheel-odom",
                 "--out", str(tmp_path / "est")]) == 0
    assert (tmp_path / "est" / "trajectory_wheel-odom.csv").exists()
    with pytest.raises(SystemExit):
        main(["estimate", "--log", str(tmp_path / "log"), "--variants", "nope"])
    assert main(["controller-step", "--out", str(tmp_path / "cs")]) == 0
    assert (tmp_path / "cs" / "step_curve.txt").exists()


def test_cli_check_needs_full_gated(tmp_path):
    path = tmp_path / "short.json"
    path.write_text(json.dumps({"duration": 2.0, "commands": [{"t": 0, "twist": [0.2, 0, 0]}]}))
    assert main(["experiment", "--scenario", str(path), "--variants", "wheel-odom",
                 "--check"]) == 1
