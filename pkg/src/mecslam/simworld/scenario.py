"""Closed-loop scenario execution and the sensor log it produces."""
from dataclasses import dataclass, field, replace
import numpy as np

from ..control import ControllerState, controller_step, measured_twist
from ..kinematics import ChassisTwist, WheelSpeeds, WheelTorques, constraint_error
from ..rotation import yaw_quat
from .config import ScenarioConfig
from .plant import GROUNDED, LIFTED, SLIPPING, initial_state, step
from .sensors import (FeatureObservation, ImuBiasState, ImuSample, WheelOdomSample,
                      generate_landmarks, sample_features, sample_imu, sample_wheels)

CONTACT_CODES = {GROUNDED: 0, SLIPPING: 1, LIFTED: 2}


@dataclass
class SensorLog:
    """All sensor streams plus ground truth for one run. Treat as immutable."""
    config: ScenarioConfig
    gt_t: np.ndarray
    gt_p: np.ndarray
    gt_q: np.ndarray
    gt_v: np.ndarray
    gt_w: np.ndarray
    gt_contact: np.ndarray       # int codes, see CONTACT_CODES
    gt_wheel: np.ndarray         # true wheel surface speeds
    imu_t: np.ndarray
    imu_gyro: np.ndarray
    imu_accel: np.ndarray
    imu_bias_gyro: np.ndarray    # true biases, for diagnostics only
    imu_bias_accel: np.ndarray
    wheel_t: np.ndarray
    wheel_speeds: np.ndarray
    frame_t: np.ndarray
    feat_frame: np.ndarray
    feat_id: np.ndarray
    feat_uv: np.ndarray
    landmarks: np.ndarray
    ctrl_t: np.ndarray
    ctrl_setpoint: np.ndarray
    ctrl_measured: np.ndarray
    ctrl_torque: np.ndarray
    ctrl_constraint: np.ndarray
    summary: dict = field(default_factory=dict)

    def __post_init__(self):
        self._frame_index = None

    def imu_samples(self, t0, t1):
        """Samples with t0 <= t <= t1 (inclusive at both ends)."""
        i0 = int(np.searchsorted(self.imu_t, t0 - 1e-9))
        i1 = int(np.searchsorted(self.imu_t, t1 + 1e-9))
        return [ImuSample(float(self.imu_t[i]), self.imu_gyro[i], self.imu_accel[i])
                for i in range(i0, i1)]

    def wheel_samples(self, t0, t1):
        i0 = int(np.searchsorted(self.wheel_t, t0 - 1e-9))
        i1 = int(np.searchsorted(self.wheel_t, t1 + 1e-9))
        return [WheelOdomSample(float(self.wheel_t[i]), WheelSpeeds.from_array(self.wheel_speeds[i]))
                for i in range(i0, i1)]

    def features(self, frame_id):
        if self._frame_index is None:
            bounds = np.searchsorted(self.feat_frame, np.arange(len(self.frame_t) + 1))
            self._frame_index = bounds
        a, b = self._frame_index[frame_id], self._frame_index[frame_id + 1]
        return [FeatureObservation(int(frame_id), int(self.feat_id[k]), self.feat_uv[k])
                for k in range(a, b)]

    def gt_index(self, t):
        return int(np.argmin(np.abs(self.gt_t - t)))

    def slip_fraction(self, t0, t1):
        """Fraction of ground-truth samples in (t0, t1] with a slipping wheel."""
        m = (self.gt_t > t0 + 1e-9) & (self.gt_t <= t1 + 1e-9)
        if not m.any():
            return 0.0
        return float(np.mean(np.any(self.gt_contact[m] == 1, axis=1)))

    def fault_overlap(self, t0, t1, kind=None):
        """Seconds of (t0, t1] covered by faults (optionally of one type)."""
        total = 0.0
        for f in self.config.faults:
            if kind is None or f.type == kind:
                total += max(0.0, min(t1, f.end) - max(t0, f.start))
        return total


def _tent_weights(stride):
    # partition-of-unity triangle filter over +-stride sim steps
    offs = np.arange(-stride, stride) + 0.5
    return (1.0 - np.abs(offs) / stride) / stride


def run_scenario(config):
    """Simulate the closed loop and synthesize every sensor stream."""
    if not isinstance(config, ScenarioConfig):
        config = ScenarioConfig.from_dict(config)
    rates = config.rates
    dt = 1.0 / rates.sim
    s_ctrl = rates.sim // rates.control
    s_imu = rates.sim // rates.imu
    s_wheel = rates.sim // rates.wheel
    s_cam = rates.sim // rates.camera
    n_ticks = int(round(config.duration * rates.sim))
    n_total = n_ticks + s_imu  # extra ticks so the last IMU window is complete

    seeds = np.random.SeedSequence(config.seed).spawn(5)
    rng_imu, rng_wheel, rng_ctrl, rng_cam, rng_lm = (np.random.default_rng(s) for s in seeds)
    landmarks = generate_landmarks(config.camera, rng_lm)
    geom = config.geometry
    noise = config.noise

    x0, y0, yaw0 = config.initial_pose
    state = initial_state(x0, y0, yaw0)
    ctrl = ControllerState()
    torques = WheelTorques(0.0, 0.0, 0.0, 0.0)

    pos = np.zeros((n_total + 1, 3))
    yaw = np.zeros(n_total + 1)
    vel = np.zeros((n_total + 1, 3))
    omega = np.zeros(n_total + 1)
    wheel = np.zeros((n_total + 1, 4))
    contact = np.zeros((n_total + 1, 4), dtype=np.int8)
    states = {}

    ctrl_rows = []
    wheel_t, wheel_rows = [], []
    frame_t, feat_rows = [], []
    last_ctrl_travel = state.wheel_travel.copy()
    last_enc_travel = state.wheel_travel.copy()

    for n in range(n_total + 1):
        t = n * dt
        state = replace(state, t=t)
        pos[n] = state.position
        yaw[n] = state.yaw
        vel[n] = state.velocity
        omega[n] = state.angular_velocity[2]
        wheel[n] = state.wheel_speed
        contact[n] = [CONTACT_CODES[c] for c in state.wheel_contact]
        if n % s_imu == 0:
            states[n] = state

        if n <= n_ticks and n > 0 and n % s_wheel == 0:
            smp = sample_wheels(state, last_enc_travel, s_wheel * dt, noise, rng_wheel)
            last_enc_travel = state.wheel_travel.copy()
            wheel_t.append(t)
            wheel_rows.append(smp.speeds.as_array())

        if n <= n_ticks and n % s_cam == 0:
            fid = len(frame_t)
            frame_t.append(t)
            for ob in sample_features(state, landmarks, config.camera, config.extrinsics,
                                      fid, noise.pixel_sigma, rng_cam):
                feat_rows.append((fid, ob.feature_id, ob.uv[0], ob.uv[1]))

        if n % s_ctrl == 0:
            period = s_ctrl * dt
            lifted = np.array([c == LIFTED for c in state.wheel_contact])
            read = (state.wheel_travel - last_ctrl_travel) / period if n > 0 else np.zeros(4)
            read = np.where(lifted, 0.0, read + rng_ctrl.standard_normal(4) * noise.encoder_sigma)
            last_ctrl_travel = state.wheel_travel.copy()
            speeds = WheelSpeeds.from_array(read)
            meas = measured_twist(speeds, geom)
            sp = ChassisTwist(*config.setpoint(t))
            if any(f.type == "abduction" for f in config.active_faults(t)):
                ctrl = ControllerState()
                torques = WheelTorques(0.0, 0.0, 0.0, 0.0)
            else:
                torques, ctrl = controller_step(sp, meas, ctrl, config.gains, period, geom)
            if n <= n_ticks:
                ctrl_rows.append((t, *sp.as_array(), *meas.as_array(), *torques.as_array(),
                                  constraint_error(speeds)))

        if n < n_total:
            state = step(state, torques, dt, config)

    # IMU: triangle-filtered acceleration and rate around each sample time
    w = _tent_weights(s_imu)
    acc_step = np.zeros((n_total + 2 * s_imu, 3))
    rate_step = np.zeros(n_total + 2 * s_imu)
    acc_step[s_imu:s_imu + n_total] = np.diff(vel, axis=0) / dt
    rate_step[s_imu:s_imu + n_total] = omega[1:]
    bias = ImuBiasState(np.array(noise.gyro_bias0, dtype=float), np.array(noise.accel_bias0, dtype=float))
    imu_t, imu_g, imu_a, b_g, b_a = [], [], [], [], []
    for n in range(0, n_ticks + 1, s_imu):
        lo = n  # index into padded arrays of step n - s_imu
        a_avg = w @ acc_step[lo:lo + 2 * s_imu]
        w_avg = w @ rate_step[lo:lo + 2 * s_imu]
        gt = replace(states[n], acceleration=a_avg, angular_velocity=np.array([0.0, 0.0, w_avg]))
        b_g.append(bias.gyro.copy())
        b_a.append(bias.accel.copy())
        smp = sample_imu(gt, noise, bias, rng_imu, s_imu * dt)
        imu_t.append(n * dt)
        imu_g.append(smp.gyro)
        imu_a.append(smp.accel)

    idx = np.arange(0, n_ticks + 1, s_imu)
    gt_q = np.array([yaw_quat(y) for y in yaw[idx]])
    feat = np.array(feat_rows, dtype=float).reshape(-1, 4)
    ctrl_arr = np.array(ctrl_rows, dtype=float).reshape(-1, 12)
    log = SensorLog(
        config=config,
        gt_t=idx * dt,
        gt_p=pos[idx],
        gt_q=gt_q,
        gt_v=vel[idx],
        gt_w=np.column_stack([np.zeros(len(idx)), np.zeros(len(idx)), omega[idx]]),
        gt_contact=contact[idx],
        gt_wheel=wheel[idx],
        imu_t=np.array(imu_t),
        imu_gyro=np.array(imu_g),
        imu_accel=np.array(imu_a),
        imu_bias_gyro=np.array(b_g),
        imu_bias_accel=np.array(b_a),
        wheel_t=np.array(wheel_t),
        wheel_speeds=np.array(wheel_rows).reshape(-1, 4),
        frame_t=np.array(frame_t),
        feat_frame=feat[:, 0].astype(int),
        feat_id=feat[:, 1].astype(int),
        feat_uv=feat[:, 2:4].copy(),
        landmarks=landmarks,
        ctrl_t=ctrl_arr[:, 0],
        ctrl_setpoint=ctrl_arr[:, 1:4],
        ctrl_measured=ctrl_arr[:, 4:7],
        ctrl_torque=ctrl_arr[:, 7:11],
        ctrl_constraint=ctrl_arr[:, 11],
    )
    log.summary = run_summary(log)
    return log


def run_summary(log):
    """Chassis motion parameters of the run."""
    p = log.gt_p
    steps = np.linalg.norm(np.diff(p, axis=0), axis=1)
    yaw = np.unwrap(2.0 * np.arctan2(log.gt_q[:, 3], log.gt_q[:, 0]))
    duration = float(log.config.duration)
    abnormal = sum(max(0.0, min(duration, f.end) - f.start) for f in log.config.faults)
    speed = np.linalg.norm(log.gt_v, axis=1)
    return {
        "abnormal_duration": float(abnormal),
        "run_time": duration,
        "average_speed": float(steps.sum() / duration),
        "maximum_speed": float(speed.max()),
        "displacement": float(steps.sum()),
        "angle": float(np.degrees(np.abs(np.diff(yaw)).sum())),
    }
