"""Closed-loop step response of the chassis velocity controller."""
from dataclasses import dataclass

import numpy as np

from ..kinematics import forward_matrix
from ..rotation import quat_to_rot
from ..simworld import ScenarioConfig, run_scenario


@dataclass(frozen=True)
class StepResponse:
    setpoint: np.ndarray       # (vx, vy, omega) of the last command segment
    final: np.ndarray          # mean true body twist over the settling window
    error: float               # largest per-axis error relative to the setpoint magnitude
    settle_time: float         # first time after which the error stays within tolerance
    tolerance: float
    curve: np.ndarray = None   # rows of t, setpoint (3), encoder twist (3), constraint error

    @property
    def converged(self):
        return self.error <= self.tolerance


def body_twist(log):
    """True chassis-frame (vx, vy, omega) at every ground-truth sample."""
    v = np.array([quat_to_rot(q).T @ v for q, v in zip(log.gt_q, log.gt_v)])
    return np.column_stack([v[:, 0], v[:, 1], log.gt_w[:, 2]])


def response_curve(log):
    """Setpoint, encoder-derived twist and constraint error at every wheel sample."""
    sc = log.config
    t = np.asarray(log.wheel_t, float)
    w = np.asarray(log.wheel_speeds, float)
    sp = np.array([sc.setpoint(x) for x in t], float).reshape(-1, 3)
    tw = w @ forward_matrix(sc.geometry).T
    ce = (w[:, 0] + w[:, 3]) - (w[:, 1] + w[:, 2])
    return np.column_stack([t, sp, tw, ce])


def step_response(scenario, tolerance=0.02, window=0.5):
    """Simulate ``scenario`` and measure how close the true twist ends up to the setpoint."""
    if not isinstance(scenario, ScenarioConfig):
        scenario = ScenarioConfig.from_dict(scenario)
    log = run_scenario(scenario)
    sp = np.asarray(scenario.commands[-1].twist, float)
    scale = float(np.max(np.abs(sp)))
    if scale == 0:
        raise ValueError("the final command segment is zero; nothing to step to")
    tw = body_twist(log)
    t = log.gt_t
    tail = t >= t[-1] - window
    final = tw[tail].mean(axis=0)
    err_t = np.max(np.abs(tw - sp), axis=1) / scale
    outside = np.nonzero((err_t > tolerance) & (t >= scenario.commands[-1].t))[0]
    settle = float(t[outside[-1] + 1]) if len(outside) and outside[-1] + 1 < len(t) else \
        (float("inf") if len(outside) else float(scenario.commands[-1].t))
    return StepResponse(sp, final, float(np.max(np.abs(final - sp)) / scale), settle, tolerance,
                        response_curve(log))
