"""Mecanum chassis kinematics and torque/wrench mappings.

Wheel order: 1 = front-left, 2 = front-right, 3 = rear-left, 4 = rear-right.
Chassis frame: x forward, y left, origin at the centre of the four wheels.
Wheel speeds are surface linear speeds (m/s), positive for forward rotation.
"""
from dataclasses import dataclass
import math

import numpy as np


@dataclass(frozen=True)
class ChassisGeometry:
    a: float  # half wheel-base, m
    b: float  # half track-width, m
    r: float  # wheel radius, m

    def __post_init__(self):
        for name in ("a", "b", "r"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"ChassisGeometry.{name} must be positive, got {v!r}")

    @property
    def R_c(self):
        """Wheel-centre radius sqrt(a^2 + b^2)."""
        return math.hypot(self.a, self.b)

    @property
    def k(self):
        return self.a + self.b


@dataclass(frozen=True)
class ChassisTwist:
    vx: float
    vy: float
    omega: float

    def as_array(self):
        return np.array([self.vx, self.vy, self.omega], dtype=float)

    @classmethod
    def from_array(cls, arr):
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class WheelSpeeds:
    v1: float
    v2: float
    v3: float
    v4: float

    def as_array(self):
        return np.array([self.v1, self.v2, self.v3, self.v4], dtype=float)

    @classmethod
    def from_array(cls, arr):
        return cls(*(float(x) for x in arr[:4]))


@dataclass(frozen=True)
class WheelTorques:
    tau1: float
    tau2: float
    tau3: float
    tau4: float

    def as_array(self):
        return np.array([self.tau1, self.tau2, self.tau3, self.tau4], dtype=float)

    @classmethod
    def from_array(cls, arr):
        return cls(*(float(x) for x in arr[:4]))


@dataclass(frozen=True)
class ChassisWrench:
    Fx: float
    Fy: float
    tau_o: float

    def as_array(self):
        return np.array([self.Fx, self.Fy, self.tau_o], dtype=float)

    @classmethod
    def from_array(cls, arr):
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))


def inverse_matrix(geom):
    """4x3 map from chassis twist to wheel speeds."""
    k = geom.k
    return np.array([[1.0, -1.0, -k],
                     [1.0, 1.0, -k],
                     [1.0, -1.0, k],
                     [1.0, 1.0, k]])


def forward_matrix(geom):
    """3x4 pseudo-inverse of :func:`inverse_matrix`."""
    k = geom.k
    return np.array([[1.0, 1.0, 1.0, 1.0],
                     [-1.0, 1.0, -1.0, 1.0],
                     [-1.0 / k, -1.0 / k, 1.0 / k, 1.0 / k]]) / 4.0


def three_wheel_matrix(excluded, geom):
    """3x4 map using only the three wheels other than ``excluded`` (1..4).

    Built by inverting the 3x3 sub-block of the inverse-kinematics matrix;
    the column of the excluded wheel is zero.
    """
    if excluded not in (1, 2, 3, 4):
        raise ValueError(f"excluded wheel must be in 1..4, got {excluded!r}")
    keep = [i for i in range(4) if i != excluded - 1]
    sub_inv = np.linalg.inv(inverse_matrix(geom)[keep])
    out = np.zeros((3, 4))
    out[:, keep] = sub_inv
    return out


def torque_matrix(geom):
    """3x4 matrix T mapping wheel torques to the chassis wrench.

    Wheel force is tau_i / r. The yaw row uses sqrt(2) R_c / r, which equals
    (a + b) / r for a square wheel layout. T is the exact left partner of
    :func:`allocation_matrix` (T @ allocation = I).
    """
    r = geom.r
    c = math.sqrt(2.0) * geom.R_c / r
    return np.array([[1.0 / r, 1.0 / r, 1.0 / r, 1.0 / r],
                     [-1.0 / r, 1.0 / r, -1.0 / r, 1.0 / r],
                     [-c, -c, c, c]])


def allocation_matrix(geom):
    """4x3 minimum-norm torque allocation (pseudo-inverse of T)."""
    r = geom.r
    q = r / 4.0
    c = math.sqrt(2.0) * r / (8.0 * geom.R_c)
    return np.array([[q, -q, -c],
                     [q, q, -c],
                     [q, -q, c],
                     [q, q, c]])


def inverse_kinematics(twist, geom):
    return WheelSpeeds.from_array(inverse_matrix(geom) @ twist.as_array())


def forward_kinematics(speeds, geom):
    return ChassisTwist.from_array(forward_matrix(geom) @ speeds.as_array())


def forward_kinematics_three_wheel(speeds, excluded, geom):
    return ChassisTwist.from_array(three_wheel_matrix(excluded, geom) @ speeds.as_array())


def constraint_error(speeds):
    """Motion constraint error (v1 + v4) - (v2 + v3), m/s."""
    return (speeds.v1 + speeds.v4) - (speeds.v2 + speeds.v3)


def torques_to_wrench(torques, geom):
    return ChassisWrench.from_array(torque_matrix(geom) @ torques.as_array())


def wrench_to_torques(wrench, geom):
    return WheelTorques.from_array(allocation_matrix(geom) @ wrench.as_array())
