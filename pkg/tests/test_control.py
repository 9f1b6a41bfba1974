import numpy as np
import pytest
from hypothesis import given, strategies as st

from mecslam.control import ControllerState, PiGains, controller_step, measured_twist, saturate
from mecslam.kinematics import ChassisGeometry, ChassisTwist, WheelSpeeds

GEOM = ChassisGeometry(0.25, 0.25, 0.1)


def test_no_error_no_torque():
    tw = ChassisTwist(0.4, -0.1, 0.2)
    tau, st_ = controller_step(tw, tw, ControllerState(), PiGains(), 0.005, GEOM)
    assert np.all(tau.as_array() == 0)
    assert st_.integral_error == (0.0, 0.0, 0.0)


def test_proportional_step_through_allocation():
    gains = PiGains(kp=2.0, ki=0.0)
    tau, _ = controller_step(ChassisTwist(1, 0, 0), ChassisTwist(0, 0, 0), ControllerState(),
                             gains, 0.01, GEOM)
    np.testing.assert_allclose(tau.as_array(), [0.05] * 4, atol=1e-15)


def test_integral_clamps():
    gains = PiGains(kp=0.0, ki=1.0, integral_limit=0.3)
    state = ControllerState()
    for _ in range(200):
        _, state = controller_step(ChassisTwist(1, -1, 0.5), ChassisTwist(0, 0, 0), state,
                                   gains, 0.01, GEOM)
    assert state.integral_error == pytest.approx((0.3, -0.3, 0.3))


def test_bad_dt():
    with pytest.raises(ValueError):
        controller_step(ChassisTwist(0, 0, 0), ChassisTwist(0, 0, 0), ControllerState(),
                        PiGains(), 0.0, GEOM)


def test_gain_validation():
    with pytest.raises(ValueError):
        PiGains(kp=-1.0)
    with pytest.raises(ValueError):
        PiGains(integral_limit=0.0)


def test_feedback_is_forward_kinematics():
    tw = measured_twist(WheelSpeeds(1, 1, 1, 1), GEOM)
    np.testing.assert_allclose(tw.as_array(), [1, 0, 0])


def test_saturate_keeps_direction():
    tau = np.array([2.0, -4.0, 1.0, 0.5])
    out = saturate(tau, 1.0)
    assert np.max(np.abs(out)) == pytest.approx(1.0)
    np.testing.assert_allclose(out / np.linalg.norm(out), tau / np.linalg.norm(tau))


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3),
       st.floats(0.01, 5.0))
def test_torque_never_exceeds_limit(err, limit):
    gains = PiGains(torque_limit=limit)
    tau, _ = controller_step(ChassisTwist(*err), ChassisTwist(0, 0, 0), ControllerState(),
                             gains, 0.005, GEOM)
    assert np.max(np.abs(tau.as_array())) <= limit * (1 + 1e-12)
