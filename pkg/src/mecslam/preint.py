"""IMU and wheel-odometer pre-integration between keyframes.

IMU deltas exclude gravity: a stationary, level sensor accumulates
``delta_v = (0, 0, +9.81 * T)``; the residual adds ``g * T`` back. Error states
are ordered ``(dp, dtheta, dv, dba, dbg)`` with right-perturbed rotations, and
the per-step transition is the exact Jacobian of the discrete midpoint update,
so covariances and bias Jacobians compose exactly across split points.
"""
from dataclasses import dataclass, field, replace
import math

import numpy as np

from .kinematics import constraint_error, forward_kinematics
from .rotation import exp_so3, right_jacobian, rot_to_quat, quat_to_rot, skew

GYRO_REINTEGRATE = 1e-2   # rad/s
ACCEL_REINTEGRATE = 1e-1  # m/s^2


class AlignmentError(ValueError):
    """Wheel and IMU streams do not cover the requested span without gaps."""


class ReintegrationRequired(ValueError):
    """Bias moved beyond the first-order validity range; integrate raw samples again."""


@dataclass(frozen=True)
class ImuNoiseModel:
    gyro_noise: float = 1e-3
    accel_noise: float = 1e-2
    gyro_bias_rw: float = 1e-5
    accel_bias_rw: float = 1e-4


@dataclass(frozen=True)
class WheelNoiseModel:
    # base twist PSD (m^2/s) for (x, y, z) in the odometer frame
    sigma_base: tuple = (2e-6, 2e-6, 2e-6)
    k_c: float = 25.0            # inflation per squared constraint error
    gyro_noise: float = 1e-3
    rot_inflation: float = 10.0  # orientation noise relative to the IMU factor


@dataclass(frozen=True)
class PreFusedWheelSample:
    t0: float
    t1: float
    twist: object        # ChassisTwist in the odometer frame
    gyro_avg: np.ndarray
    accel_avg: np.ndarray
    constraint_err: float

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError(f"t1 must exceed t0 ({self.t0!r}, {self.t1!r})")

    @property
    def dt(self):
        return self.t1 - self.t0


@dataclass(frozen=True)
class PreintegratedImu:
    dt_total: float
    delta_p: np.ndarray
    delta_v: np.ndarray
    delta_q: np.ndarray
    covariance: np.ndarray
    bias_jacobian: np.ndarray        # 9x6, rows (p, theta, v), cols (ba, bg)
    linearization_bias: tuple        # (ba, bg)
    noise: ImuNoiseModel = ImuNoiseModel()
    t: np.ndarray = field(default=None, repr=False)      # raw sample times
    gyro: np.ndarray = field(default=None, repr=False)
    accel: np.ndarray = field(default=None, repr=False)
    trace_t: np.ndarray = field(default=None, repr=False)  # offsets from the start
    trace_p: np.ndarray = field(default=None, repr=False)
    trace_v: np.ndarray = field(default=None, repr=False)
    trace_R: np.ndarray = field(default=None, repr=False)

    @property
    def delta_R(self):
        return quat_to_rot(self.delta_q)

    def jac(self, row, col):
        """3x3 block of the bias Jacobian, e.g. ``jac('p', 'bg')``."""
        r = {"p": 0, "q": 3, "v": 6}[row]
        c = {"ba": 0, "bg": 3}[col]
        return self.bias_jacobian[r:r + 3, c:c + 3]


@dataclass(frozen=True)
class PreintegratedWheelOdom:
    dt_total: float
    delta_p: np.ndarray
    delta_q: np.ndarray
    covariance: np.ndarray     # 6x6 over (dp, dtheta)
    cum_distance: float
    cum_constraint_err: float
    trace_t: np.ndarray = field(default=None, repr=False)
    trace_p: np.ndarray = field(default=None, repr=False)
    trace_R: np.ndarray = field(default=None, repr=False)

    @property
    def delta_R(self):
        return quat_to_rot(self.delta_q)


def _check_gaps(t, limit, what):
    d = np.diff(t)
    if len(d) and d.max() > limit + 1e-9:
        k = int(np.argmax(d))
        raise AlignmentError(f"{what} gap of {d[k]:.6g} s between t={t[k]:.6g} and t={t[k + 1]:.6g}")


def _interval_mean(ts, vals, t0, t1):
    """Mean of the piecewise-linear signal through (ts, vals) over [t0, t1]."""
    inner = ts[(ts > t0) & (ts < t1)]
    knots = np.concatenate([[t0], inner, [t1]])
    pts = np.column_stack([np.interp(knots, ts, vals[:, k]) for k in range(vals.shape[1])])
    return np.trapezoid(pts, knots, axis=0) / (t1 - t0)


def prefuse(wheels, imu, t_i, t_j, geom, period=None):
    """Pack encoder intervals in (t_i, t_j] with interval-averaged IMU data."""
    wt = np.array([w.t for w in wheels], dtype=float)
    it = np.array([s.t for s in imu], dtype=float)
    if len(wt) == 0 or len(it) < 2:
        raise AlignmentError("empty wheel or IMU stream")
    if period is None:
        d = np.diff(wt)
        period = float(d[d > 0].min()) if len(d) else t_j - t_i
    limit = 2.0 * period
    if it[0] > t_i + 1e-9 or it[-1] < t_j - 1e-9:
        raise AlignmentError(f"IMU stream [{it[0]:.6g}, {it[-1]:.6g}] does not cover "
                             f"[{t_i:.6g}, {t_j:.6g}]")
    _check_gaps(it, limit, "IMU")
    sel = [k for k in range(len(wt)) if t_i + 1e-9 < wt[k] <= t_j + 1e-9]
    if not sel:
        raise AlignmentError(f"no encoder sample in ({t_i:.6g}, {t_j:.6g}]")
    bounds = np.concatenate([[t_i], wt[sel]])
    if t_j - bounds[-1] > 1e-9:
        bounds = np.append(bounds, t_j)
    _check_gaps(bounds, limit, "encoder")
    gyro = np.array([s.gyro for s in imu], dtype=float)
    accel = np.array([s.accel for s in imu], dtype=float)
    out = []
    for n, k in enumerate(sel):
        t0 = bounds[n]
        t1 = float(wt[k])
        speeds = wheels[k].speeds
        out.append(PreFusedWheelSample(
            float(t0), t1, forward_kinematics(speeds, geom),
            _interval_mean(it, gyro, t0, t1), _interval_mean(it, accel, t0, t1),
            constraint_error(speeds)))
    return out


# ---------------------------------------------------------------- IMU

def _imu_noise_cov(noise, dt):
    q = np.zeros((18, 18))
    q[0:3, 0:3] = q[6:9, 6:9] = np.eye(3) * noise.accel_noise ** 2 / dt
    q[3:6, 3:6] = q[9:12, 9:12] = np.eye(3) * noise.gyro_noise ** 2 / dt
    q[12:15, 12:15] = np.eye(3) * noise.accel_bias_rw ** 2 * dt
    q[15:18, 15:18] = np.eye(3) * noise.gyro_bias_rw ** 2 * dt
    return q


def _as_arrays(samples):
    t = np.array([s.t for s in samples], dtype=float)
    g = np.array([s.gyro for s in samples], dtype=float).reshape(-1, 3)
    a = np.array([s.accel for s in samples], dtype=float).reshape(-1, 3)
    return t, g, a


def imu_preintegrate(samples, bias=None, noise=None):
    """Midpoint pre-integration of raw IMU samples spanning one link."""
    t, g, a = _as_arrays(samples) if not isinstance(samples, tuple) else samples
    return _imu_integrate(t, g, a, bias, noise)


def _imu_integrate(t, gyro, accel, bias=None, noise=None):
    if len(t) < 2:
        raise ValueError("IMU pre-integration needs at least two samples")
    if np.any(np.diff(t) <= 0):
        raise ValueError("IMU timestamps must be strictly increasing")
    noise = noise or ImuNoiseModel()
    ba, bg = (np.zeros(3), np.zeros(3)) if bias is None else (np.asarray(bias[0], float),
                                                              np.asarray(bias[1], float))
    n = len(t)
    p = np.zeros(3)
    v = np.zeros(3)
    R = np.eye(3)
    P = np.zeros((15, 15))
    J = np.eye(15)
    I3 = np.eye(3)
    F = np.eye(15)
    G = np.zeros((15, 18))
    G[9:12, 12:15] = I3
    G[12:15, 15:18] = I3
    tr_p = np.zeros((n, 3))
    tr_v = np.zeros((n, 3))
    tr_R = np.zeros((n, 3, 3))
    tr_R[0] = I3
    for k in range(n - 1):
        dt = t[k + 1] - t[k]
        a0 = accel[k] - ba
        a1 = accel[k + 1] - ba
        theta = (0.5 * (gyro[k] + gyro[k + 1]) - bg) * dt
        E = exp_so3(theta)
        Jr = right_jacobian(theta)
        R1 = R @ E
        am = 0.5 * (R @ a0 + R1 @ a1)
        p = p + v * dt + 0.5 * am * dt * dt
        v = v + am * dt

        Ra1x = R1 @ skew(a1)
        A_th = -0.5 * (R @ skew(a0) + Ra1x @ E.T)
        A_ba = -0.5 * (R + R1)
        A_bg = 0.5 * Ra1x @ Jr * dt
        h = 0.5 * dt * dt
        F[0:3, 3:6] = h * A_th
        F[0:3, 6:9] = dt * I3
        F[0:3, 9:12] = h * A_ba
        F[0:3, 12:15] = h * A_bg
        F[3:6, 3:6] = E.T
        F[3:6, 12:15] = -Jr * dt
        F[6:9, 3:6] = dt * A_th
        F[6:9, 9:12] = dt * A_ba
        F[6:9, 12:15] = dt * A_bg
        # noise order: n_a0, n_w0, n_a1, n_w1, n_ba, n_bg
        Na0 = -0.5 * R
        Na1 = -0.5 * R1
        Nw = 0.25 * Ra1x @ Jr * dt
        for rows, s in ((slice(0, 3), h), (slice(6, 9), dt)):
            G[rows, 0:3] = s * Na0
            G[rows, 3:6] = s * Nw
            G[rows, 6:9] = s * Na1
            G[rows, 9:12] = s * Nw
        G[3:6, 3:6] = G[3:6, 9:12] = -0.5 * Jr * dt
        P = F @ P @ F.T + G @ _imu_noise_cov(noise, dt) @ G.T
        J = F @ J
        R = R1
        tr_p[k + 1], tr_v[k + 1], tr_R[k + 1] = p, v, R
    P = 0.5 * (P + P.T)
    return PreintegratedImu(
        dt_total=float(t[-1] - t[0]), delta_p=p, delta_v=v, delta_q=rot_to_quat(R),
        covariance=P, bias_jacobian=J[0:9, 9:15].copy(), linearization_bias=(ba.copy(), bg.copy()),
        noise=noise, t=t.copy(), gyro=gyro.copy(), accel=accel.copy(),
        trace_t=t - t[0], trace_p=tr_p, trace_v=tr_v, trace_R=tr_R)


def bias_correct(pre, new_bias):
    """First-order bias update of the deltas; raises when re-integration is needed."""
    dba = np.asarray(new_bias[0], float) - pre.linearization_bias[0]
    dbg = np.asarray(new_bias[1], float) - pre.linearization_bias[1]
    if np.abs(dbg).max() > GYRO_REINTEGRATE or np.abs(dba).max() > ACCEL_REINTEGRATE:
        raise ReintegrationRequired(
            f"bias change |dba|={np.abs(dba).max():.3g}, |dbg|={np.abs(dbg).max():.3g} "
            "beyond first-order range")
    db = np.concatenate([dba, dbg])
    d = pre.bias_jacobian @ db
    R = pre.delta_R @ exp_so3(d[3:6])
    return replace(pre, delta_p=pre.delta_p + d[0:3], delta_v=pre.delta_v + d[6:9],
                   delta_q=rot_to_quat(R))


def corrected_deltas(pre, ba, bg):
    """(dp, dR, dv) at bias (ba, bg) by first-order correction, without range checks."""
    db = np.concatenate([np.asarray(ba, float) - pre.linearization_bias[0],
                         np.asarray(bg, float) - pre.linearization_bias[1]])
    d = pre.bias_jacobian @ db
    return pre.delta_p + d[0:3], pre.delta_R @ exp_so3(d[3:6]), pre.delta_v + d[6:9]


def reintegrate(pre, new_bias):
    if pre.t is None:
        raise ValueError("raw samples were not retained")
    return _imu_integrate(pre.t, pre.gyro, pre.accel, new_bias, pre.noise)


def compose_imu(a, b):
    """Pre-integration over [t_i, t_k] from [t_i, t_j] and [t_j, t_k] (same bias)."""
    R1, R2 = a.delta_R, b.delta_R
    T2 = b.dt_total
    I3 = np.eye(3)
    C = np.eye(9)
    C[0:3, 3:6] = -R1 @ skew(b.delta_p)
    C[0:3, 6:9] = T2 * I3
    C[3:6, 3:6] = R2.T
    C[6:9, 3:6] = -R1 @ skew(b.delta_v)
    D = np.zeros((9, 9))
    D[0:3, 0:3] = R1
    D[3:6, 3:6] = I3
    D[6:9, 6:9] = R1
    M = np.eye(15)
    M[0:9, 0:9] = C
    M[0:9, 9:15] = D @ b.bias_jacobian
    B = np.eye(15)
    B[0:9, 0:9] = D
    P = M @ a.covariance @ M.T + B @ b.covariance @ B.T
    joined = lambda x, y: None if x is None or y is None else np.concatenate([x, y[1:]])
    tr = {}
    if a.trace_t is not None and b.trace_t is not None:
        tr = dict(
            trace_t=np.concatenate([a.trace_t, a.dt_total + b.trace_t[1:]]),
            trace_p=np.concatenate([a.trace_p, a.delta_p + a.delta_v * b.trace_t[1:, None]
                                    + b.trace_p[1:] @ R1.T]),
            trace_v=np.concatenate([a.trace_v, a.delta_v + b.trace_v[1:] @ R1.T]),
            trace_R=np.concatenate([a.trace_R, R1 @ b.trace_R[1:]]))
    return PreintegratedImu(
        dt_total=a.dt_total + T2,
        delta_p=a.delta_p + a.delta_v * T2 + R1 @ b.delta_p,
        delta_v=a.delta_v + R1 @ b.delta_v,
        delta_q=rot_to_quat(R1 @ R2),
        covariance=0.5 * (P + P.T),
        bias_jacobian=C @ a.bias_jacobian + D @ b.bias_jacobian,
        linearization_bias=a.linearization_bias, noise=a.noise,
        t=joined(a.t, b.t), gyro=joined(a.gyro, b.gyro), accel=joined(a.accel, b.accel), **tr)


# ---------------------------------------------------------------- wheel

def _left_jacobian(phi):
    return right_jacobian(-np.asarray(phi, float))


def wheel_preintegrate(prefused, noise=None, R_bo=None):
    """Chain pre-fused encoder intervals into a relative odometer-frame pose."""
    if not prefused:
        raise ValueError("wheel pre-integration needs at least one pre-fused sample")
    noise = noise or WheelNoiseModel()
    R_bo = np.eye(3) if R_bo is None else np.asarray(R_bo, float)
    base = np.diag(np.asarray(noise.sigma_base, float))
    q_rot = noise.rot_inflation * noise.gyro_noise ** 2
    n = len(prefused)
    p = np.zeros(3)
    R = np.eye(3)
    P = np.zeros((6, 6))
    F = np.eye(6)
    dist = 0.0
    cum_err = 0.0
    tr_t = np.zeros(n + 1)
    tr_p = np.zeros((n + 1, 3))
    tr_R = np.zeros((n + 1, 3, 3))
    tr_R[0] = np.eye(3)
    t_start = prefused[0].t0
    for k, s in enumerate(prefused):
        dt = s.dt
        w = R_bo.T @ np.asarray(s.gyro_avg, float)
        theta = w * dt
        E = exp_so3(theta)
        Jr = right_jacobian(theta)
        vel = np.array([s.twist.vx, s.twist.vy, 0.0])
        d = _left_jacobian(theta) @ vel * dt  # exact for constant twist and rate
        F[0:3, 3:6] = -R @ skew(d)
        F[3:6, 3:6] = E.T
        Q = np.zeros((6, 6))
        Sv = base + noise.k_c * s.constraint_err ** 2 * np.eye(3)
        Q[0:3, 0:3] = R @ Sv @ R.T * dt
        Q[3:6, 3:6] = Jr @ Jr.T * (q_rot * dt)
        P = F @ P @ F.T + Q
        p = p + R @ d
        R = R @ E
        dist += math.hypot(vel[0], vel[1]) * dt
        cum_err += abs(s.constraint_err) * dt
        tr_t[k + 1] = s.t1 - t_start
        tr_p[k + 1] = p
        tr_R[k + 1] = R
    P = 0.5 * (P + P.T)
    return PreintegratedWheelOdom(
        dt_total=float(prefused[-1].t1 - t_start), delta_p=p, delta_q=rot_to_quat(R),
        covariance=P, cum_distance=dist, cum_constraint_err=cum_err,
        trace_t=tr_t, trace_p=tr_p, trace_R=tr_R)


def compose_wheel(a, b):
    R1, R2 = a.delta_R, b.delta_R
    C = np.eye(6)
    C[0:3, 3:6] = -R1 @ skew(b.delta_p)
    C[3:6, 3:6] = R2.T
    D = np.eye(6)
    D[0:3, 0:3] = R1
    P = C @ a.covariance @ C.T + D @ b.covariance @ D.T
    tr = {}
    if a.trace_t is not None and b.trace_t is not None:
        tr = dict(trace_t=np.concatenate([a.trace_t, a.dt_total + b.trace_t[1:]]),
                  trace_p=np.concatenate([a.trace_p, a.delta_p + b.trace_p[1:] @ R1.T]),
                  trace_R=np.concatenate([a.trace_R, R1 @ b.trace_R[1:]]))
    return PreintegratedWheelOdom(
        dt_total=a.dt_total + b.dt_total, delta_p=a.delta_p + R1 @ b.delta_p,
        delta_q=rot_to_quat(R1 @ R2), covariance=0.5 * (P + P.T),
        cum_distance=a.cum_distance + b.cum_distance,
        cum_constraint_err=a.cum_constraint_err + b.cum_constraint_err, **tr)


def body_relative_motion(wheel, extrinsics):
    """Wheel pre-integration re-expressed as body-frame (dp, dR) at t_i."""
    Rbo, pbo = extrinsics.Rbo, extrinsics.pbo
    dR = Rbo @ wheel.delta_R @ Rbo.T
    return Rbo @ wheel.delta_p + pbo - dR @ pbo, dR
