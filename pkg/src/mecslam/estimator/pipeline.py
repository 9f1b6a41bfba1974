"""Keyframe bookkeeping and the full estimator pass over a sensor log."""
from dataclasses import dataclass, field

import numpy as np

from ..anomaly import (detect_alignment, detect_constraint, detect_prediction_consistency,
                       fuse, is_reliable, not_evaluable, predict_positions)
from ..preint import corrected_deltas, imu_preintegrate, prefuse, wheel_preintegrate
from ..rotation import quat_mul, rot_to_quat, yaw_quat
from .factors import triangulate
from .solver import marginalize, optimize
from .state import STATE_DIM, Feature, KeyframeState, Link, MarginalizationPrior, SlidingWindow


def initial_prior(state, cfg):
    """Anchor the first keyframe with the configured per-block standard deviations."""
    sig = np.repeat(np.asarray(cfg.prior_sigma, float), 3)
    return MarginalizationPrior([state.kf_id], np.diag(1.0 / sig), np.zeros(STATE_DIM),
                                {state.kf_id: state})


def predict_state(x_i, imu_pre, kf_id, t, gravity):
    """Propagate a keyframe state through one IMU pre-integration."""
    g = np.asarray(gravity, float)
    T = imu_pre.dt_total
    dp, dR, dv = corrected_deltas(imu_pre, x_i.b_a, x_i.b_g)
    R = x_i.R
    return KeyframeState(p=x_i.p + x_i.v * T + 0.5 * g * T * T + R @ dp,
                         v=x_i.v + g * T + R @ dv, q=rot_to_quat(R @ dR),
                         b_a=x_i.b_a, b_g=x_i.b_g, t=t, kf_id=kf_id)


def _observe(window, kf_id, features):
    for ob in features:
        f = window.features.get(ob.feature_id)
        if f is None:
            f = Feature(ob.feature_id, kf_id, np.asarray(ob.uv, float))
            window.features[ob.feature_id] = f
        f.obs[kf_id] = np.asarray(ob.uv, float)


def triangulate_features(window, cfg, extrinsics):
    """Give an inverse depth to every untriangulated feature seen from two keyframes."""
    count = 0
    for f in window.features.values():
        if f.triangulated or len(f.obs) < 2:
            continue
        xa = window.states[f.anchor_frame]
        k = max(f.obs)
        xj = window.states[k]
        depth = triangulate(f.anchor_uv, f.obs[k], xa.R, xa.p, xj.R, xj.p,
                            extrinsics.Rbc, extrinsics.pbc, cfg.min_triangulation_angle)
        if depth is not None and 1.0 / depth < cfg.max_inv_depth:
            f.inv_depth = 1.0 / depth
            count += 1
    return count


def add_keyframe(window, cfg, extrinsics, kf_id, t, features, imu_pre, wheel_pre=None,
                 verdict=None):
    """Append one keyframe linked to the newest one; marginalize first if the window is full."""
    if len(window) >= cfg.window_size:
        marginalize(window, cfg, extrinsics)
    last = window.kf_ids[-1]
    x_new = predict_state(window.states[last], imu_pre, kf_id, t, cfg.gravity)
    window.states[kf_id] = x_new
    gated = bool(cfg.gating and verdict is not None and verdict.fused)
    wheel = wheel_pre if (cfg.use_wheel and not gated) else None
    window.links.append(Link(last, kf_id, imu_pre, wheel, gated, verdict))
    _observe(window, kf_id, features)
    triangulate_features(window, cfg, extrinsics)
    return window


def mean_parallax_px(obs_a, obs_b, focal_px):
    """Mean image displacement of features common to two frames, in pixels."""
    a = {o.feature_id: o.uv for o in obs_a}
    d = [np.linalg.norm(np.asarray(o.uv) - a[o.feature_id]) for o in obs_b if o.feature_id in a]
    return float(np.mean(d)) * focal_px if d else 0.0


@dataclass
class EstimatorResult:
    t: np.ndarray                 # keyframe times
    states: list                  # KeyframeState per keyframe, final estimates
    verdicts: list                # AnomalyVerdict per link
    gated: list                   # bool per link, whether the wheel factor was left out
    reports: list = field(default_factory=list)
    keyframe_frames: list = field(default_factory=list)

    @property
    def positions(self):
        return np.array([s.p for s in self.states])

    @property
    def quaternions(self):
        return np.array([s.q for s in self.states])


def _verdict(x_i, imu_pre, wheel_pre, extrinsics, gravity, parallax_px, accel_var):
    d1 = detect_constraint(wheel_pre)
    imu_p, wheel_p, cov = predict_positions(x_i.p, x_i.v, x_i.R, (x_i.b_a, x_i.b_g), imu_pre,
                                            wheel_pre, extrinsics, gravity)
    d2 = detect_prediction_consistency(imu_p, wheel_p, cov, is_reliable(parallax_px, accel_var))
    try:
        d3 = detect_alignment(imu_pre, wheel_pre, extrinsics, x_i.R.T @ np.asarray(gravity, float))
    except ValueError:
        d3 = not_evaluable()
    return fuse(d1, d2, d3, x_i.t, x_i.t + imu_pre.dt_total)


def initial_state(log, frame, perturbation=(0.0, 0.0, 0.0)):
    """Ground-truth state at a camera frame, optionally offset by (dx, dy, dyaw)."""
    t = float(log.frame_t[frame])
    k = log.gt_index(t)
    q = quat_mul(yaw_quat(perturbation[2]), log.gt_q[k])
    p = log.gt_p[k] + np.array([perturbation[0], perturbation[1], 0.0])
    return KeyframeState(p=p, v=log.gt_v[k], q=q, b_a=np.zeros(3), b_g=np.zeros(3), t=t, kf_id=0)


def run_estimator(log, cfg, perturbation=(0.0, 0.0, 0.0)):
    """Sliding-window estimation over a whole log; the log is not modified."""
    sc = log.config
    ext, geom = sc.extrinsics, sc.geometry
    wheel_period = 1.0 / sc.rates.wheel
    window = SlidingWindow()
    x0 = initial_state(log, 0, perturbation)
    window.states[0] = x0
    window.prior = initial_prior(x0, cfg)
    last_obs = log.features(0)
    _observe(window, 0, last_obs)

    done = {}                     # kf id -> final state once it leaves the window
    kf_frames = [0]
    verdicts, gated, reports = [], [], []
    n_frames = len(log.frame_t)
    last_frame = 0
    for fr in range(1, n_frames):
        stride = fr - last_frame
        obs = log.features(fr)
        if fr != n_frames - 1:
            if stride < cfg.min_stride:
                continue
            if stride < cfg.max_stride and mean_parallax_px(last_obs, obs, cfg.focal_px) < cfg.parallax_px:
                continue
        t_i, t_j = float(log.frame_t[last_frame]), float(log.frame_t[fr])
        kf_prev = window.kf_ids[-1]
        x_i = window.states[kf_prev]
        imu = log.imu_samples(t_i, t_j)
        imu_pre = imu_preintegrate(imu, (x_i.b_a, x_i.b_g), cfg.imu_noise)
        pf = prefuse(log.wheel_samples(t_i, t_j), imu, t_i, t_j, geom, wheel_period)
        wheel_pre = wheel_preintegrate(pf, cfg.wheel_noise, ext.Rbo)
        accel = np.array([s.accel for s in imu])
        verdict = _verdict(x_i, imu_pre, wheel_pre, ext, cfg.gravity,
                           mean_parallax_px(last_obs, obs, cfg.focal_px),
                           float(np.trace(np.cov(accel.T))))
        kf_id = len(kf_frames)
        if len(window) >= cfg.window_size:
            old = window.kf_ids[0]
            done[old] = window.states[old]
        add_keyframe(window, cfg, ext, kf_id, t_j, obs, imu_pre, wheel_pre, verdict)
        reports.append(optimize(window, cfg, ext))
        verdicts.append(verdict)
        gated.append(window.links[-1].gated)
        kf_frames.append(fr)
        last_frame, last_obs = fr, obs

    done.update(window.states)
    states = [done[k] for k in sorted(done)]
    return EstimatorResult(np.array([s.t for s in states]), states, verdicts, gated, reports,
                           kf_frames)
