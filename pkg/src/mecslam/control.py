"""Torque-based chassis velocity controller.

Three PI loops on (vx, vy, omega) produce a chassis wrench that is split into
wheel torques with the minimum-norm allocation. Because the wheels are torque
driven rather than speed locked, a slipping wheel is free to spin and the
motion constraint error stays visible in the encoder readings.
"""
from dataclasses import dataclass, replace
import math

import numpy as np

from .kinematics import WheelTorques, allocation_matrix, forward_kinematics


def _vec3(x):
    arr = np.broadcast_to(np.asarray(x, dtype=float), (3,))
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class PiGains:
    kp: tuple = (40.0, 40.0, 2.0)   # N/(m/s), N/(m/s), N*m/(rad/s)
    ki: tuple = (120.0, 120.0, 6.0)
    integral_limit: tuple = (0.5, 0.5, 0.5)
    torque_limit: float = math.inf  # per wheel, N*m

    def __post_init__(self):
        object.__setattr__(self, "kp", _vec3(self.kp))
        object.__setattr__(self, "ki", _vec3(self.ki))
        object.__setattr__(self, "integral_limit", _vec3(self.integral_limit))
        if min(self.kp) < 0 or min(self.ki) < 0:
            raise ValueError("PI gains must be non-negative")
        if min(self.integral_limit) <= 0:
            raise ValueError("integral_limit must be positive")
        if not self.torque_limit > 0:
            raise ValueError("torque_limit must be positive")


@dataclass(frozen=True)
class ControllerState:
    integral_error: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "integral_error", _vec3(self.integral_error))


def measured_twist(speeds, geom):
    """Kinematics solution of the observed wheel speeds (feedback path)."""
    return forward_kinematics(speeds, geom)


def saturate(torques, limit):
    """Scale all four torques uniformly so that max |tau_i| <= limit."""
    peak = float(np.max(np.abs(torques)))
    if peak > limit:
        return torques * (limit / peak)
    return torques


def controller_step(setpoint, measured, state, gains, dt, geom):
    """One PI update; returns ``(WheelTorques, ControllerState)``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    err = setpoint.as_array() - measured.as_array()
    limit = np.array(gains.integral_limit)
    integral = np.clip(np.array(state.integral_error) + err * dt, -limit, limit)
    wrench = np.array(gains.kp) * err + np.array(gains.ki) * integral
    tau = saturate(allocation_matrix(geom) @ wrench, gains.torque_limit)
    return WheelTorques.from_array(tau), replace(state, integral_error=tuple(integral))

