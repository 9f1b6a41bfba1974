"""Planar rigid-body Mecanum chassis with per-wheel Coulomb friction.

Each wheel has a spin state (surface speed ``s_i``) and exchanges a generalized
force ``F_i`` with the ground. The body wrench is ``J^T F`` with ``J`` the
inverse-kinematics matrix, so a gripping wheel satisfies ``s_i = J_i @ twist``.
A wheel grips while ``|F_i| <= mu_s N_i``; otherwise it slips with kinetic
friction ``mu_k N_i`` opposing the slip velocity ``s_i - J_i @ twist``.
"""
from dataclasses import dataclass, replace
from functools import lru_cache
import math

import numpy as np

from ..kinematics import inverse_matrix
from ..rotation import quat_yaw, yaw_quat

GROUNDED = "grounded"
SLIPPING = "slipping"
LIFTED = "lifted"

_STICK_TOL = 1e-9


@dataclass(frozen=True)
class GroundTruth:
    t: float
    position: np.ndarray          # world, m
    orientation: np.ndarray       # world-from-body quaternion [w, x, y, z]
    velocity: np.ndarray          # world, m/s
    angular_velocity: np.ndarray  # body, rad/s
    wheel_contact: tuple          # per wheel: grounded / slipping / lifted
    wheel_speed: np.ndarray       # true wheel surface speeds, m/s
    wheel_travel: np.ndarray      # integrated surface travel, m
    acceleration: np.ndarray      # world acceleration over the last step, m/s^2

    @property
    def yaw(self):
        return quat_yaw(self.orientation)

    def body_twist(self):
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        vx, vy = self.velocity[0], self.velocity[1]
        return np.array([c * vx + s * vy, -s * vx + c * vy, self.angular_velocity[2]])

    def kinetic_energy(self, plant):
        return (0.5 * plant.mass * float(self.velocity @ self.velocity)
                + 0.5 * plant.yaw_inertia * float(self.angular_velocity[2] ** 2)
                + 0.5 * plant.wheel_mass * float(self.wheel_speed @ self.wheel_speed))


def initial_state(x=0.0, y=0.0, yaw=0.0, t=0.0):
    return GroundTruth(
        t=t,
        position=np.array([x, y, 0.0]),
        orientation=yaw_quat(yaw),
        velocity=np.zeros(3),
        angular_velocity=np.zeros(3),
        wheel_contact=(GROUNDED,) * 4,
        wheel_speed=np.zeros(4),
        wheel_travel=np.zeros(4),
        acceleration=np.zeros(3),
    )


def plant_drag(plant):
    return np.array([plant.body_drag, plant.body_drag, plant.yaw_drag])


def _friction_coeffs(config, faults):
    mu_s = np.full(4, config.plant.mu_s)
    mu_k = np.full(4, config.plant.mu_k)
    for f in faults:
        if f.type == "slip":
            scale = float(f.params.get("mu_scale", 0.05))
            for w in f.params.get("wheels", [1]):
                mu_s[w - 1] *= scale
                mu_k[w - 1] *= scale
    return mu_s, mu_k


@lru_cache(maxsize=32)
def _constants(geom, plant):
    J = inverse_matrix(geom)
    M = np.diag([plant.mass, plant.mass, plant.yaw_inertia])
    A_grip = np.linalg.inv(M + plant.wheel_mass * J.T @ J)
    return J, M, A_grip


def _solve_contact(tw, spin, tau, slipping, J, M, plant, r, mu_s, mu_k, normal, A_grip=None):
    """Active-set solve for body acceleration and wheel forces.

    Returns ``(twist_dot, F, slipping)`` with ``slipping`` the final boolean mask.
    """
    mw, bw = plant.wheel_mass, plant.wheel_damping
    drive = tau / r - bw * spin
    u = J @ tw
    drag = -plant_drag(plant) * tw
    slipping = slipping.copy()
    sign_hint = np.sign(spin - u)
    for _ in range(5):
        S = ~slipping
        F = np.zeros(4)
        K = slipping
        if K.any():
            sgn = np.where(sign_hint[K] != 0, sign_hint[K], np.sign(drive[K]))
            F[K] = mu_k[K] * normal * sgn
        JS = J[S]
        rhs = JS.T @ drive[S] + J[K].T @ F[K] + drag
        if A_grip is not None and not K.any():
            twist_dot = A_grip @ rhs
        else:
            twist_dot = np.linalg.solve(M + mw * JS.T @ JS, rhs)
        F[S] = drive[S] - mw * (JS @ twist_dot)
        excess = np.where(S, np.abs(F) - mu_s * normal, -np.inf)
        worst = int(np.argmax(excess))
        if excess[worst] <= 0:
            return twist_dot, F, slipping
        slipping[worst] = True
        sign_hint[worst] = np.sign(F[worst])
    return twist_dot, F, slipping


def step(state, torques, dt, config):
    """Advance the ground truth by ``dt`` seconds (semi-implicit Euler)."""
    if not 0 < dt <= 0.01 + 1e-12:
        raise ValueError(f"dt must be in (0, 10 ms], got {dt!r}")
    faults = config.active_faults(state.t)
    kinds = {f.type for f in faults}
    plant, geom = config.plant, config.geometry
    J, M, A_grip = _constants(geom, plant)
    normal = plant.mass * plant.gravity / 4.0
    yaw = state.yaw
    c0, s0 = math.cos(yaw), math.sin(yaw)
    vx, vy = state.velocity[0], state.velocity[1]
    tw = np.array([c0 * vx + s0 * vy, -s0 * vx + c0 * vy, state.angular_velocity[2]])
    spin = state.wheel_speed.copy()
    tau = np.asarray(torques.as_array() if hasattr(torques, "as_array") else torques, dtype=float)

    if "abduction" in kinds:
        f = next(f for f in faults if f.type == "abduction")
        return _carry_step(state, f, dt, yaw)

    mu_s, mu_k = _friction_coeffs(config, faults)
    slipping = np.array([c != GROUNDED for c in state.wheel_contact])
    slipping |= np.abs(spin - J @ tw) > _STICK_TOL

    if "collision" in kinds:
        # body held by the barrier; wheels see zero ground speed
        tw_new = np.zeros(3)
        u = np.zeros(4)
        drive = tau / geom.r - plant.wheel_damping * spin
        sigma = spin - u
        # the barrier load is shared, so the wheels break loose together
        held = (np.abs(sigma) <= _STICK_TOL) & ~slipping
        grip = held & bool(np.all((np.abs(drive) <= mu_s * normal)[held]))
        F = np.where(grip, drive, mu_k * normal * np.where(sigma != 0, np.sign(sigma), np.sign(drive)))
        spin_dot = np.where(grip, 0.0, (drive - F) / plant.wheel_mass)
        slipping = ~grip
        v_world = np.zeros(3)
        yaw_new = yaw
    else:
        tw_dot, F, slipping = _solve_contact(tw, spin, tau, slipping, J, M, plant, geom.r,
                                             mu_s, mu_k, normal, A_grip)
        drive = tau / geom.r - plant.wheel_damping * spin
        spin_dot = (drive - F) / plant.wheel_mass
        vb = tw[:2] + dt * tw_dot[:2]
        omega_new = tw[2] + dt * tw_dot[2]
        c, s = math.cos(yaw), math.sin(yaw)
        v_world = np.array([c * vb[0] - s * vb[1], s * vb[0] + c * vb[1], 0.0])
        yaw_new = yaw + dt * omega_new
        cn, sn = math.cos(yaw_new), math.sin(yaw_new)
        tw_new = np.array([cn * v_world[0] + sn * v_world[1],
                           -sn * v_world[0] + cn * v_world[1], omega_new])
        u = J @ tw_new

    sigma_old = spin - (np.zeros(4) if "collision" in kinds else J @ tw)
    spin_new = np.where(slipping, spin + dt * spin_dot, u)
    sigma_new = spin_new - u
    restick = slipping & ((np.sign(sigma_new) * np.sign(sigma_old) < 0) | (np.abs(sigma_new) < 1e-6))
    spin_new = np.where(restick, u, spin_new)
    slipping = slipping & ~restick

    contact = tuple(SLIPPING if sl else GROUNDED for sl in slipping)
    position = state.position + dt * v_world
    position[2] = state.position[2]
    return GroundTruth(
        t=state.t + dt,
        position=position,
        orientation=yaw_quat(yaw_new),
        velocity=v_world,
        angular_velocity=np.array([0.0, 0.0, tw_new[2]]),
        wheel_contact=contact,
        wheel_speed=spin_new,
        wheel_travel=state.wheel_travel + dt * spin_new,
        acceleration=(v_world - state.velocity) / dt,
    )


def _carry_step(state, fault, dt, yaw):
    """Robot lifted and carried: wheels stopped, body tracks the carry velocity.

    An optional circular sway (``sway_velocity`` m/s at ``sway_frequency`` Hz) is
    added to the carry velocity, standing in for the hand motion of the carrier.
    """
    p = fault.params
    tc = float(p.get("time_constant", 0.5))
    target = np.array([*p.get("carry_velocity", (0.0, -0.25)), 0.0], dtype=float)
    sway = float(p.get("sway_velocity", 0.0))
    if sway:
        phase = 2.0 * math.pi * float(p.get("sway_frequency", 1.0)) * (state.t - fault.start)
        target[:2] += sway * np.array([math.cos(phase), math.sin(phase)])
    w_target = float(p.get("carry_yaw_rate", 0.0))
    a = min(1.0, dt / tc)
    v_world = state.velocity + a * (target - state.velocity)
    v_world[2] = 0.0
    omega = state.angular_velocity[2] + a * (w_target - state.angular_velocity[2])
    yaw_new = yaw + dt * omega
    position = state.position + dt * v_world
    return replace(
        state,
        t=state.t + dt,
        position=position,
        orientation=yaw_quat(yaw_new),
        velocity=v_world,
        angular_velocity=np.array([0.0, 0.0, omega]),
        wheel_contact=(LIFTED,) * 4,
        wheel_speed=np.zeros(4),
        acceleration=(v_world - state.velocity) / dt,
    )
