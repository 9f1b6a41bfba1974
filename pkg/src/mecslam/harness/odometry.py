"""Dead-reckoning baselines: encoders alone, and encoders with the gyro."""
import numpy as np

from ..kinematics import WheelSpeeds, forward_kinematics
from ..preint import body_relative_motion, prefuse, wheel_preintegrate
from ..rotation import exp_so3, right_jacobian, rot_to_quat, quat_to_rot
from .metrics import Trajectory


def _start(log):
    k = log.gt_index(float(log.frame_t[0]))
    return float(log.gt_t[k]), log.gt_p[k].copy(), quat_to_rot(log.gt_q[k])


def wheel_odometry(log):
    """Planar encoder dead reckoning of the odometer frame, reported as body poses."""
    ext, geom = log.config.extrinsics, log.config.geometry
    Rbo, pbo = ext.Rbo, ext.pbo
    t0, p, R = _start(log)
    Ro = R @ Rbo
    po = p + R @ pbo
    ts, ps, qs = [t0], [p], [rot_to_quat(R)]
    t_prev = t0
    for t, speeds in zip(log.wheel_t, log.wheel_speeds):
        if t <= t0 + 1e-12:
            continue
        dt = t - t_prev
        tw = forward_kinematics(WheelSpeeds.from_array(speeds), geom)
        theta = np.array([0.0, 0.0, tw.omega * dt])
        d = right_jacobian(-theta) @ np.array([tw.vx, tw.vy, 0.0]) * dt
        po = po + Ro @ d
        Ro = Ro @ exp_so3(theta)
        Rb = Ro @ Rbo.T
        ts.append(float(t))
        ps.append(po - Rb @ pbo)
        qs.append(rot_to_quat(Rb))
        t_prev = t
    return Trajectory(ts, ps, qs)


def wheel_inertial_odometry(log, noise=None):
    """Chain wheel pre-integrations (encoder translation, gyro rotation) frame to frame."""
    sc = log.config
    ext, geom = sc.extrinsics, sc.geometry
    period = 1.0 / sc.rates.wheel
    t0, p, R = _start(log)
    ts, ps, qs = [t0], [p], [rot_to_quat(R)]
    for t_i, t_j in zip(log.frame_t[:-1], log.frame_t[1:]):
        if t_i < t0 - 1e-12:
            continue
        imu = log.imu_samples(t_i, t_j)
        pre = wheel_preintegrate(prefuse(log.wheel_samples(t_i, t_j), imu, t_i, t_j, geom, period),
                                 noise, ext.Rbo)
        dp, dR = body_relative_motion(pre, ext)
        p = p + R @ dp
        R = R @ dR
        ts.append(float(t_j))
        ps.append(p)
        qs.append(rot_to_quat(R))
    return Trajectory(ts, ps, qs)
