import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import imu_brute_force, planar_brute_force, smooth_signals
from mecslam.kinematics import ChassisGeometry, ChassisTwist, WheelSpeeds, inverse_kinematics
from mecslam.preint import (AlignmentError, ImuNoiseModel, PreFusedWheelSample,
                            ReintegrationRequired, WheelNoiseModel, bias_correct, compose_imu,
                            compose_wheel, imu_preintegrate, prefuse, reintegrate,
                            wheel_preintegrate)
from mecslam.rotation import log_so3, quat_yaw
from mecslam.simworld import ImuSample, WheelOdomSample

GEOM = ChassisGeometry(0.15, 0.15, 0.05)


def imu_stream(t, gyro, accel):
    return [ImuSample(float(x), np.asarray(gyro(x), float), np.asarray(accel(x), float)) for x in t]


def wheel_stream(t, twist):
    s = inverse_kinematics(ChassisTwist(*twist), GEOM)
    return [WheelOdomSample(float(x), s) for x in t]


def fused(twist, rate, T, n, err=0.0):
    dt = T / n
    return [PreFusedWheelSample(k * dt, (k + 1) * dt, ChassisTwist(*twist), np.array([0, 0, rate]),
                                np.zeros(3), err) for k in range(n)]


# -- prefuse

def test_prefuse_constant_streams():
    imu = imu_stream(np.arange(0, 1.001, 0.005), lambda t: [0.1, 0.2, 0.3],
                     lambda t: [1.0, 0.0, 9.81])
    out = prefuse(wheel_stream(np.arange(0.02, 1.001, 0.02), (0.5, 0.1, 0.2)), imu, 0.0, 1.0, GEOM)
    assert len(out) == 50
    for s in out:
        np.testing.assert_allclose(s.gyro_avg, [0.1, 0.2, 0.3])
        np.testing.assert_allclose(s.accel_avg, [1.0, 0.0, 9.81])
        np.testing.assert_allclose(s.twist.as_array(), [0.5, 0.1, 0.2], atol=1e-12)
        assert s.constraint_err == pytest.approx(0.0, abs=1e-12)


def test_prefuse_gyro_ramp_average():
    imu = imu_stream(np.linspace(0, 1, 201), lambda t: [0, 0, t], lambda t: [0, 0, 9.81])
    out = prefuse(wheel_stream([1.0], (0, 0, 0)), imu, 0.0, 1.0, GEOM, period=1.0)
    assert out[0].gyro_avg[2] == pytest.approx(0.5)


def test_prefuse_gap_is_reported():
    imu = imu_stream(np.arange(0, 1.001, 0.005), lambda t: [0, 0, 0], lambda t: [0, 0, 9.81])
    t = [x for x in np.arange(0.02, 1.001, 0.02) if not 0.3 < x < 0.45]
    with pytest.raises(AlignmentError, match="gap"):
        prefuse(wheel_stream(t, (0.2, 0, 0)), imu, 0.0, 1.0, GEOM, period=0.02)


def test_prefuse_short_imu_coverage():
    imu = imu_stream(np.arange(0, 0.5, 0.005), lambda t: [0, 0, 0], lambda t: [0, 0, 9.81])
    with pytest.raises(AlignmentError):
        prefuse(wheel_stream([0.02], (0, 0, 0)), imu, 0.0, 1.0, GEOM)


# -- IMU

def test_imu_stationary():
    t = np.linspace(0, 1, 201)
    pre = imu_preintegrate(imu_stream(t, lambda t: [0, 0, 0], lambda t: [0, 0, 9.81]))
    np.testing.assert_allclose(pre.delta_p, [0, 0, 9.81 / 2], atol=1e-12)
    np.testing.assert_allclose(pre.delta_v, [0, 0, 9.81], atol=1e-12)
    np.testing.assert_allclose(pre.delta_R, np.eye(3), atol=1e-15)


def test_imu_quarter_turn():
    t = np.linspace(0, 1, 201)
    pre = imu_preintegrate(imu_stream(t, lambda t: [0, 0, math.pi / 2], lambda t: [0, 0, 9.81]))
    assert quat_yaw(pre.delta_q) == pytest.approx(math.pi / 2, abs=1e-12)


def test_imu_matches_fine_step_oracle():
    rng = np.random.default_rng(11)
    for _ in range(3):
        g, a = smooth_signals(rng)
        t = np.linspace(0, 1, 1001)
        pre = imu_preintegrate((t, g(t[:, None]), a(t[:, None])))
        p, v, R = imu_brute_force(g, a, 1.0)
        assert np.linalg.norm(pre.delta_p - p) <= 1e-6 * np.linalg.norm(p)
        assert np.linalg.norm(pre.delta_v - v) <= 1e-6 * np.linalg.norm(v)
        assert np.linalg.norm(log_so3(R.T @ pre.delta_R)) <= 1e-6 * np.linalg.norm(log_so3(R))


def test_imu_rejects_bad_input():
    with pytest.raises(ValueError):
        imu_preintegrate((np.array([0.0]), np.zeros((1, 3)), np.zeros((1, 3))))
    with pytest.raises(ValueError):
        imu_preintegrate((np.array([0.0, 0.0]), np.zeros((2, 3)), np.zeros((2, 3))))


def _split(rng):
    g, a = smooth_signals(rng)
    t = np.linspace(0, 0.6, 121)
    arr = lambda s: (t[s], g(t[s, None]), a(t[s, None]))
    whole = imu_preintegrate(arr(slice(None)), noise=ImuNoiseModel())
    left, right = imu_preintegrate(arr(slice(0, 61))), imu_preintegrate(arr(slice(60, None)))
    return whole, left, right


def test_imu_concatenation():
    whole, left, right = _split(np.random.default_rng(2))
    joined = compose_imu(left, right)
    for name in ("delta_p", "delta_v", "delta_q", "covariance", "bias_jacobian"):
        a, b = getattr(joined, name), getattr(whole, name)
        assert np.max(np.abs(a - b)) <= 1e-9 * max(1.0, np.max(np.abs(b))), name


def test_imu_covariance_grows():
    _, left, right = _split(np.random.default_rng(3))
    joined = compose_imu(left, right)
    assert np.all(np.linalg.eigvalsh(joined.covariance - left.covariance) > -1e-18)
    assert np.all(np.linalg.eigvalsh(joined.covariance) > 0)


def test_bias_correct_identity_and_threshold():
    whole, _, _ = _split(np.random.default_rng(4))
    same = bias_correct(whole, whole.linearization_bias)
    np.testing.assert_array_equal(same.delta_p, whole.delta_p)
    with pytest.raises(ReintegrationRequired):
        bias_correct(whole, (np.zeros(3), np.array([0.05, 0, 0])))


def test_bias_correct_is_second_order():
    whole, _, _ = _split(np.random.default_rng(5))
    errs = []
    for eps in (2e-3, 1e-3):
        bias = (np.array([1.0, -2.0, 0.5]) * eps * 10, np.array([0.5, 1.0, -1.0]) * eps)
        fo, full = bias_correct(whole, bias), reintegrate(whole, bias)
        errs.append(np.linalg.norm(log_so3(full.delta_R.T @ fo.delta_R))
                    + np.linalg.norm(fo.delta_v - full.delta_v))
    assert errs[1] < errs[0] / 3.0


# -- wheel

def test_wheel_straight_line():
    pre = wheel_preintegrate(fused((1, 0, 0), 0.0, 2.0, 100))
    np.testing.assert_allclose(pre.delta_p, [2, 0, 0], atol=1e-12)
    assert pre.cum_distance == pytest.approx(2.0)


def test_wheel_quarter_arc():
    pre = wheel_preintegrate(fused((1, 0, 0), math.pi / 2, 1.0, 50))
    np.testing.assert_allclose(pre.delta_p, [2 / math.pi, 2 / math.pi, 0], atol=1e-12)
    assert quat_yaw(pre.delta_q) == pytest.approx(math.pi / 2)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-2, 2)),
                min_size=1, max_size=5))
def test_wheel_matches_planar_oracle(segments):
    knots = np.arange(len(segments) + 1) * 0.02
    samples = [PreFusedWheelSample(knots[k], knots[k + 1], ChassisTwist(vx, vy, w),
                                   np.array([0, 0, w]), np.zeros(3), 0.0)
               for k, (vx, vy, w) in enumerate(segments)]
    pre = wheel_preintegrate(samples)
    p, yaw = planar_brute_force(knots, [s[:2] for s in segments], [s[2] for s in segments])
    np.testing.assert_allclose(pre.delta_p, p, atol=1e-9)
    assert quat_yaw(pre.delta_q) == pytest.approx(math.remainder(yaw, 2 * math.pi), abs=1e-12)


def test_wheel_concatenation():
    s = fused((0.4, -0.2, 0), 0.7, 1.0, 50)
    whole = wheel_preintegrate(s)
    joined = compose_wheel(wheel_preintegrate(s[:20]), wheel_preintegrate(s[20:]))
    np.testing.assert_allclose(joined.delta_p, whole.delta_p, atol=1e-12)
    np.testing.assert_allclose(joined.covariance, whole.covariance, atol=1e-18, rtol=1e-9)


def test_wheel_clean_covariance_is_base_only():
    noise = WheelNoiseModel()
    clean = wheel_preintegrate(fused((0.5, 0, 0), 0.0, 1.0, 50), noise)
    no_k = wheel_preintegrate(fused((0.5, 0, 0), 0.0, 1.0, 50), WheelNoiseModel(k_c=0.0))
    np.testing.assert_array_equal(clean.covariance, no_k.covariance)
    still = wheel_preintegrate(fused((0.5, 0, 0), 0.0, 1.0, 50), WheelNoiseModel(gyro_noise=0.0))
    np.testing.assert_allclose(still.covariance[0:3, 0:3], np.diag(noise.sigma_base), rtol=1e-12)


def test_wheel_constraint_error_inflates():
    a = wheel_preintegrate(fused((0.5, 0, 0), 0.1, 1.0, 50))
    b = wheel_preintegrate(fused((0.5, 0, 0), 0.1, 1.0, 50, err=0.2))
    assert np.all(np.linalg.eigvalsh(b.covariance - a.covariance) >= -1e-18)
    assert np.trace(b.covariance[:3, :3]) > 10 * np.trace(a.covariance[:3, :3])
    assert b.cum_constraint_err == pytest.approx(0.2)
