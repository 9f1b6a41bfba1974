import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mecslam.kinematics import (ChassisGeometry, ChassisTwist, ChassisWrench, WheelSpeeds,
                                WheelTorques, constraint_error, forward_kinematics,
                                forward_kinematics_three_wheel, inverse_kinematics,
                                torques_to_wrench, wrench_to_torques)

GEOM = ChassisGeometry(0.25, 0.25, 0.1)   # a + b = 0.5, r = 0.1, R_c = sqrt(0.125)
finite = st.floats(-10, 10, allow_nan=False)


def speeds(*v):
    return WheelSpeeds(*map(float, v))


def test_inverse_examples():
    assert inverse_kinematics(ChassisTwist(1, 0, 0), GEOM).as_array().tolist() == [1, 1, 1, 1]
    assert inverse_kinematics(ChassisTwist(0, 0, 0), GEOM).as_array().tolist() == [0, 0, 0, 0]
    np.testing.assert_allclose(inverse_kinematics(ChassisTwist(0, 0, 1), GEOM).as_array(),
                               [-0.5, -0.5, 0.5, 0.5])


def test_forward_examples():
    np.testing.assert_allclose(forward_kinematics(speeds(1, 1, 1, 1), GEOM).as_array(), [1, 0, 0])
    np.testing.assert_allclose(forward_kinematics(speeds(-1, 1, -1, 1), GEOM).as_array(), [0, 1, 0])


def test_forward_unbalanced_wheel_oracle():
    # least-squares twist for (1.2, 1, 1, 1), frozen from a brute-force lstsq solve
    A = np.array([[1, -1, -0.5], [1, 1, -0.5], [1, -1, 0.5], [1, 1, 0.5]])
    oracle = np.linalg.lstsq(A, [1.2, 1, 1, 1], rcond=None)[0]
    np.testing.assert_allclose(oracle, [1.05, -0.05, -0.1], atol=1e-12)
    np.testing.assert_allclose(forward_kinematics(speeds(1.2, 1, 1, 1), GEOM).as_array(),
                               [1.05, -0.05, -0.1], atol=1e-12)


def test_three_wheel_examples():
    tw = forward_kinematics_three_wheel(speeds(999, 1, 1, 1), 1, GEOM)
    np.testing.assert_allclose(tw.as_array(), [1, 0, 0], atol=1e-12)
    # rows 2..4 solved by hand: vx + vy - w/2 = 1, vx - vy + w/2 = 1, vx + vy + w/2 = 0
    tw = forward_kinematics_three_wheel(speeds(0, 1, 1, 0), 1, GEOM)
    np.testing.assert_allclose(tw.as_array(), [1, -0.5, -1], atol=1e-12)


def test_three_wheel_rejects_bad_index():
    with pytest.raises(ValueError):
        forward_kinematics_three_wheel(speeds(1, 1, 1, 1), 5, GEOM)


def test_constraint_error_examples():
    assert constraint_error(speeds(1, 1, 1, 1)) == 0
    assert constraint_error(speeds(1.2, 1, 1, 1)) == pytest.approx(0.2)


def test_wrench_examples():
    w = torques_to_wrench(WheelTorques(0.1, 0.1, 0.1, 0.1), GEOM)
    np.testing.assert_allclose(w.as_array(), [4.0, 0.0, 0.0], atol=1e-12)
    assert torques_to_wrench(WheelTorques(0, 0, 0, 0), GEOM).as_array().tolist() == [0, 0, 0]
    np.testing.assert_allclose(wrench_to_torques(ChassisWrench(4, 0, 0), GEOM).as_array(),
                               [0.1] * 4, atol=1e-12)
    assert wrench_to_torques(ChassisWrench(0, 0, 0), GEOM).as_array().tolist() == [0] * 4


def test_yaw_wrench_column():
    g = ChassisGeometry(0.3, 0.4, 0.1)    # R_c = 0.5
    c = math.sqrt(2) * 0.1 / (8 * 0.5)
    np.testing.assert_allclose(wrench_to_torques(ChassisWrench(0, 0, 2.0), g).as_array(),
                               [-2 * c, -2 * c, 2 * c, 2 * c], atol=1e-15)


def test_geometry_validation():
    with pytest.raises(ValueError, match="r"):
        ChassisGeometry(0.2, 0.2, 0.0)


@settings(max_examples=200)
@given(finite, finite, finite)
def test_round_trip(vx, vy, w):
    tw = ChassisTwist(vx, vy, w)
    s = inverse_kinematics(tw, GEOM)
    np.testing.assert_allclose(forward_kinematics(s, GEOM).as_array(), tw.as_array(), atol=1e-12)
    assert abs(constraint_error(s)) <= 1e-12 * max(1.0, abs(vx))


@settings(max_examples=100)
@given(finite, finite, finite, st.integers(1, 4))
def test_three_wheel_agrees_on_constrained_speeds(vx, vy, w, k):
    s = inverse_kinematics(ChassisTwist(vx, vy, w), GEOM)
    np.testing.assert_allclose(forward_kinematics_three_wheel(s, k, GEOM).as_array(),
                               forward_kinematics(s, GEOM).as_array(), atol=1e-11)


@settings(max_examples=100)
@given(finite, finite, finite)
def test_wrench_round_trip(fx, fy, tz):
    w = ChassisWrench(fx, fy, tz)
    np.testing.assert_allclose(torques_to_wrench(wrench_to_torques(w, GEOM), GEOM).as_array(),
                               w.as_array(), atol=1e-12)


@given(st.lists(finite, min_size=4, max_size=4), st.lists(finite, min_size=4, max_size=4),
       finite, finite)
def test_forward_is_linear(x, y, a, b):
    fx = forward_kinematics(speeds(*x), GEOM).as_array()
    fy = forward_kinematics(speeds(*y), GEOM).as_array()
    fz = forward_kinematics(speeds(*(a * np.array(x) + b * np.array(y))), GEOM).as_array()
    np.testing.assert_allclose(fz, a * fx + b * fy, atol=1e-9)


def test_three_wheel_matrices_match_print():
    from mecslam.kinematics import three_wheel_matrix
    g = ChassisGeometry(0.2, 0.3, 0.05)
    k = 1.0 / g.k
    printed = {
        1: [[0, 1, 1, 0], [0, 0, -1, 1], [0, -k, 0, k]],
        2: [[1, 0, 0, 1], [0, 0, -1, 1], [-k, 0, k, 0]],
        3: [[1, 0, 0, 1], [-1, 1, 0, 0], [0, -k, 0, k]],
        4: [[0, 1, 1, 0], [-1, 1, 0, 0], [-k, 0, k, 0]],
    }
    for excluded, m in printed.items():
        np.testing.assert_allclose(three_wheel_matrix(excluded, g), np.array(m) / 2, atol=1e-15)
