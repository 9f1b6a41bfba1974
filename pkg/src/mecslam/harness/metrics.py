"""Final-pose error metrics and run summary statistics."""
from dataclasses import asdict, dataclass
import math

import numpy as np

from ..rotation import quat_yaw, wrap_angle


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    p: np.ndarray       # (n, 3)
    q: np.ndarray       # (n, 4) world-from-body [w, x, y, z]

    def __post_init__(self):
        t = np.asarray(self.t, float).reshape(-1)
        p = np.asarray(self.p, float).reshape(-1, 3)
        q = np.asarray(self.q, float).reshape(-1, 4)
        if not len(t) == len(p) == len(q):
            raise ValueError("trajectory arrays differ in length")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    def __len__(self):
        return len(self.t)

    @property
    def yaw(self):
        return np.array([quat_yaw(q) for q in self.q])


@dataclass(frozen=True)
class RunMetrics:
    position_error: float          # m, final pose
    position_error_rate: float     # position_error / displacement
    heading_error: float           # deg, signed final yaw difference
    ate_rmse: float                # m, over all estimate samples
    run_time: float                # s
    avg_speed: float               # m/s
    max_speed: float               # m/s
    displacement: float            # m, ground-truth path length
    accumulated_angle: float       # deg, total absolute ground-truth yaw change
    d1_count: int = 0
    d2_count: int = 0
    d3_count: int = 0
    fused_count: int = 0
    intervals: int = 0

    def as_dict(self):
        return asdict(self)


def path_length(p):
    p = np.asarray(p, float)
    return float(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)))


def _truth_at(truth, t):
    """Ground-truth position and yaw interpolated at times ``t``."""
    p = np.column_stack([np.interp(t, truth.t, truth.p[:, k]) for k in range(3)])
    yaw = np.interp(t, truth.t, np.unwrap(truth.yaw))
    return p, yaw


def compute_metrics(estimate, truth, verdicts=()):
    """Errors of ``estimate`` against a densely sampled ``truth`` trajectory."""
    if len(estimate) == 0:
        raise ValueError("empty estimated trajectory")
    if len(truth) < 2:
        raise ValueError("ground truth needs at least two samples")
    lo, hi = truth.t[0] - 1e-9, truth.t[-1] + 1e-9
    if estimate.t[0] < lo or estimate.t[-1] > hi:
        raise ValueError("estimate extends beyond the ground-truth time span")
    gt_p, gt_yaw = _truth_at(truth, estimate.t)
    err = np.linalg.norm(estimate.p - gt_p, axis=1)
    dist = path_length(truth.p)
    if not dist > 0:
        raise ValueError("ground-truth displacement must be positive")
    heading = math.degrees(wrap_angle(quat_yaw(estimate.q[-1]) - gt_yaw[-1]))
    duration = float(truth.t[-1] - truth.t[0])
    speed = np.linalg.norm(np.diff(truth.p, axis=0), axis=1) / np.diff(truth.t)
    yaw = np.unwrap(truth.yaw)
    counts = dict(d1_count=0, d2_count=0, d3_count=0, fused_count=0)
    for v in verdicts:
        counts["d1_count"] += int(v.d1.triggered)
        counts["d2_count"] += int(v.d2.triggered)
        counts["d3_count"] += int(v.d3.triggered)
        counts["fused_count"] += int(v.fused)
    return RunMetrics(
        position_error=float(err[-1]),
        position_error_rate=float(err[-1]) / dist,
        heading_error=heading,
        ate_rmse=float(np.sqrt(np.mean(err ** 2))),
        run_time=duration,
        avg_speed=dist / duration if duration > 0 else 0.0,
        max_speed=float(speed.max()) if len(speed) else 0.0,
        displacement=dist,
        accumulated_angle=math.degrees(float(np.sum(np.abs(np.diff(yaw))))),
        intervals=len(verdicts),
        **counts)


def truth_trajectory(log):
    return Trajectory(log.gt_t, log.gt_p, log.gt_q)
