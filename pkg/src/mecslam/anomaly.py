"""Chassis-anomaly detectors and the gating rule for wheel factors.

Detector 1 checks the accumulated motion-constraint error, detector 2 compares
IMU and wheel position predictions off the last estimate, detector 3 checks
whether any initial velocity reconciles the IMU and wheel trajectories of one
interval. The wheel factor is gated when ``d1 or (d2 and d3)``. All threshold
comparisons are strict.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .preint import body_relative_motion, corrected_deltas

CONSTRAINT_ABS = 0.02        # m
CONSTRAINT_REL = 0.01        # fraction of travelled distance
MAHALANOBIS_LIMIT = 1.5
PARALLAX_FLOOR_PX = 0.5
ACCEL_VAR_FLOOR = 0.05       # m^2/s^4
GRAVITY_BODY = np.array([0.0, 0.0, -9.81])


class Flag(str, Enum):
    TRIGGERED = "triggered"
    CLEAR = "clear"
    NOT_EVALUABLE = "not-evaluable"


@dataclass(frozen=True)
class DetectorResult:
    flag: Flag
    statistic: float
    threshold: float

    @property
    def triggered(self):
        return self.flag is Flag.TRIGGERED


@dataclass(frozen=True)
class AnomalyVerdict:
    d1: DetectorResult
    d2: DetectorResult
    d3: DetectorResult
    fused: bool
    t0: float = float("nan")
    t1: float = float("nan")
    diagnostics: dict = field(default_factory=dict)


def _result(stat, threshold):
    return DetectorResult(Flag.TRIGGERED if stat > threshold else Flag.CLEAR, float(stat), threshold)


def mahalanobis_distance(r, cov):
    """sqrt(r^T cov^-1 r); raises ValueError for a non-SPD covariance."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (len(r), len(r)) or not np.allclose(cov, cov.T, rtol=1e-8,
                                                           atol=1e-12 * np.abs(cov).max()):
        raise ValueError("covariance must be a symmetric matrix matching the residual")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance is not positive definite") from None
    return float(np.sqrt(r @ np.linalg.solve(cov, r)))


def detect_constraint(pre):
    """Detector 1 on one interval's wheel pre-integration."""
    e, dist = pre.cum_constraint_err, pre.cum_distance
    hit = e > CONSTRAINT_ABS and e > CONSTRAINT_REL * dist
    return DetectorResult(Flag.TRIGGERED if hit else Flag.CLEAR, float(e),
                          max(CONSTRAINT_ABS, CONSTRAINT_REL * dist))


def is_reliable(mean_parallax_px, accel_var):
    """Whether the last estimate is trustworthy enough for detector 2."""
    return not (mean_parallax_px < PARALLAX_FLOOR_PX and accel_var < ACCEL_VAR_FLOOR)


def detect_prediction_consistency(imu_pred_p, wheel_pred_p, cov, reliable=True):
    """Detector 2: Mahalanobis distance between the two position predictions."""
    if not reliable:
        return DetectorResult(Flag.NOT_EVALUABLE, float("nan"), MAHALANOBIS_LIMIT)
    diff = np.asarray(imu_pred_p, float) - np.asarray(wheel_pred_p, float)
    return _result(mahalanobis_distance(diff, cov), MAHALANOBIS_LIMIT)


def predict_positions(p_i, v_i, R_i, bias, imu_pre, wheel_pre, extrinsics,
                      gravity=(0.0, 0.0, -9.81)):
    """IMU and wheel dead-reckoned positions at t_j off one state, plus their covariance."""
    g = np.asarray(gravity, float)
    T = imu_pre.dt_total
    dp, _, _ = corrected_deltas(imu_pre, bias[0], bias[1])
    imu_p = p_i + v_i * T + 0.5 * g * T * T + R_i @ dp
    dpb, _ = body_relative_motion(wheel_pre, extrinsics)
    wheel_p = p_i + R_i @ dpb
    Rbo = extrinsics.Rbo
    cov_b = imu_pre.covariance[0:3, 0:3] + Rbo @ wheel_pre.covariance[0:3, 0:3] @ Rbo.T
    cov = R_i @ cov_b @ R_i.T
    return imu_p, wheel_p, 0.5 * (cov + cov.T)


def alignment_residual(imu_pre, wheel_pre, extrinsics, gravity_body=GRAVITY_BODY):
    """Endpoint residual of the best initial-velocity alignment, body frame at t_i.

    Positions are compared at every IMU sample: ``v0 t + g t^2 / 2 + dp_imu(t)``
    against the wheel trajectory interpolated to ``t``; ``v0`` is the
    least-squares fit.
    """
    if imu_pre.trace_t is None or wheel_pre.trace_t is None:
        raise ValueError("pre-integrations carry no trajectory trace")
    if len(imu_pre.trace_t) - 1 < 3:
        raise ValueError("degenerate alignment: fewer than 3 IMU segments in the interval")
    Rbo, pbo = extrinsics.Rbo, extrinsics.pbo
    t = imu_pre.trace_t
    m = t <= wheel_pre.trace_t[-1] + 1e-9
    t = t[m]
    wp = np.column_stack([np.interp(t, wheel_pre.trace_t, wheel_pre.trace_p[:, k]) for k in range(3)])
    # rotation at the same instants, nearest wheel knot (only used for the lever arm)
    idx = np.clip(np.searchsorted(wheel_pre.trace_t, t - 1e-9), 0, len(wheel_pre.trace_t) - 1)
    Rb = Rbo @ wheel_pre.trace_R[idx] @ Rbo.T
    wheel_body = wp @ Rbo.T + pbo - Rb @ pbo
    c = 0.5 * np.outer(t * t, gravity_body) + imu_pre.trace_p[m] - wheel_body
    v0 = -(t @ c) / (t @ t)
    return v0 * t[-1] + c[-1], v0


def detect_alignment(imu_pre, wheel_pre, extrinsics, gravity_body=GRAVITY_BODY, cov_floor=0.0):
    """Detector 3: state-free IMU/wheel trajectory alignment over one interval."""
    r, _ = alignment_residual(imu_pre, wheel_pre, extrinsics, gravity_body)
    Rbo = extrinsics.Rbo
    cov = (imu_pre.covariance[0:3, 0:3] + Rbo @ wheel_pre.covariance[0:3, 0:3] @ Rbo.T
           + cov_floor * np.eye(3))
    return _result(mahalanobis_distance(r, cov), MAHALANOBIS_LIMIT)


def fuse(d1, d2, d3, t0=float("nan"), t1=float("nan")):
    """Gate when detector 1 fires, or detectors 2 and 3 fire together."""
    hit = lambda d: d.flag is Flag.TRIGGERED
    fused = hit(d1) or (hit(d2) and hit(d3))
    diag = {name: {"flag": d.flag.value, "statistic": d.statistic, "threshold": d.threshold}
            for name, d in (("d1", d1), ("d2", d2), ("d3", d3))}
    return AnomalyVerdict(d1, d2, d3, bool(fused), t0, t1, diag)


def not_evaluable(threshold=MAHALANOBIS_LIMIT):
    return DetectorResult(Flag.NOT_EVALUABLE, float("nan"), threshold)
