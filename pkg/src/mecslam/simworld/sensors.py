"""Sensor synthesis: IMU, wheel encoders and synthetic monocular features."""
from dataclasses import dataclass
import math

import numpy as np

from ..kinematics import WheelSpeeds
from ..rotation import quat_to_rot
from .plant import LIFTED

GRAVITY_WORLD = np.array([0.0, 0.0, -9.81])


@dataclass(frozen=True)
class ImuSample:
    t: float
    gyro: np.ndarray   # body rad/s
    accel: np.ndarray  # body specific force, m/s^2


@dataclass(frozen=True)
class WheelOdomSample:
    t: float
    speeds: WheelSpeeds  # mean surface speed over the preceding encoder period


@dataclass(frozen=True)
class FeatureObservation:
    frame_id: int
    feature_id: int
    uv: np.ndarray  # normalized image coordinates


@dataclass
class ImuBiasState:
    gyro: np.ndarray
    accel: np.ndarray


def sample_imu(gt, noise, bias_state, rng, dt_imu, gravity=GRAVITY_WORLD):
    """Noisy IMU sample from the ground truth; advances ``bias_state`` in place.

    ``gt.acceleration`` and ``gt.angular_velocity`` are taken as the true
    (band-limited) world acceleration and body rate at ``gt.t``.
    """
    R = quat_to_rot(gt.orientation)
    sq = math.sqrt(dt_imu)
    gyro_true = np.asarray(gt.angular_velocity, dtype=float)
    accel_true = R.T @ (np.asarray(gt.acceleration, dtype=float) - gravity)
    white = rng.standard_normal(6)
    gyro = gyro_true + bias_state.gyro + white[:3] * (noise.gyro_noise / sq)
    accel = accel_true + bias_state.accel + white[3:] * (noise.accel_noise / sq)
    walk = rng.standard_normal(6)
    bias_state.gyro = bias_state.gyro + walk[:3] * (noise.gyro_bias_rw * sq)
    bias_state.accel = bias_state.accel + walk[3:] * (noise.accel_bias_rw * sq)
    return ImuSample(gt.t, gyro, accel)


def sample_wheels(gt, prev_travel, period, noise, rng):
    """Encoder-derived surface speeds averaged over the last ``period`` seconds.

    Lifted wheels read exactly zero.
    """
    mean = (np.asarray(gt.wheel_travel) - np.asarray(prev_travel)) / period
    eps = rng.standard_normal(4) * noise.encoder_sigma
    lifted = np.array([c == LIFTED for c in gt.wheel_contact])
    speeds = np.where(lifted, 0.0, mean + eps)
    return WheelOdomSample(gt.t, WheelSpeeds.from_array(speeds))


def generate_landmarks(camera, rng):
    center = np.asarray(camera.box_center, dtype=float)
    size = np.asarray(camera.box_size, dtype=float)
    u = rng.uniform(-0.5, 0.5, size=(camera.n_landmarks, 3))
    return center + u * size


def camera_pose(gt, extrinsics):
    """World-from-camera rotation and camera centre."""
    R_wb = quat_to_rot(gt.orientation)
    return R_wb @ extrinsics.Rbc, np.asarray(gt.position) + R_wb @ extrinsics.pbc


def project(landmarks, R_wc, p_wc, camera):
    """Returns (ids, uv, depth) of landmarks inside the field of view."""
    pc = (landmarks - p_wc) @ R_wc
    z = pc[:, 2]
    ok = (z > camera.min_depth) & (z < camera.max_depth)
    uv = np.zeros((len(landmarks), 2))
    uv[ok] = pc[ok, :2] / z[ok, None]
    ok &= (np.abs(uv[:, 0]) <= camera.fov_u) & (np.abs(uv[:, 1]) <= camera.fov_v)
    ids = np.flatnonzero(ok)
    return ids, uv[ids], z[ids]


def sample_features(gt, landmarks, camera, extrinsics, frame_id, pixel_sigma, rng):
    R_wc, p_wc = camera_pose(gt, extrinsics)
    ids, uv, _ = project(landmarks, R_wc, p_wc, camera)
    noisy = uv + rng.standard_normal(uv.shape) * pixel_sigma
    return [FeatureObservation(frame_id, int(i), noisy[k]) for k, i in enumerate(ids)]
