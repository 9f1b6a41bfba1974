"""Window contents: keyframe states, features, links and the marginalization prior."""
from dataclasses import dataclass, field, replace

import numpy as np

from ..preint import ImuNoiseModel, WheelNoiseModel
from ..rotation import log_so3, quat_exp, quat_mul, quat_normalize, quat_to_rot

STATE_DIM = 15


@dataclass(frozen=True)
class KeyframeState:
    p: np.ndarray
    v: np.ndarray
    q: np.ndarray          # world-from-body [w, x, y, z]
    b_a: np.ndarray
    b_g: np.ndarray
    t: float = 0.0
    kf_id: int = 0

    def __post_init__(self):
        for name in ("p", "v", "b_a", "b_g"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "q", quat_normalize(np.asarray(self.q, dtype=float)))
        object.__setattr__(self, "_R", quat_to_rot(self.q))

    @property
    def R(self):
        return self._R

    def boxplus(self, dx):
        """Apply a 15-vector local perturbation (p, theta, v, ba, bg)."""
        q = quat_normalize(quat_mul(self.q, quat_exp(dx[3:6])))
        return replace(self, p=self.p + dx[0:3], q=q, v=self.v + dx[6:9],
                       b_a=self.b_a + dx[9:12], b_g=self.b_g + dx[12:15])

    def boxminus(self, other):
        """Local difference ``self [-] other`` consistent with :meth:`boxplus`."""
        return np.concatenate([self.p - other.p, log_so3(other.R.T @ self.R), self.v - other.v,
                               self.b_a - other.b_a, self.b_g - other.b_g])


@dataclass
class Feature:
    id: int
    anchor_frame: int            # keyframe id of the anchor observation
    anchor_uv: np.ndarray
    inv_depth: float = float("nan")
    obs: dict = field(default_factory=dict)   # keyframe id -> uv

    @property
    def triangulated(self):
        return bool(self.inv_depth > 0)


@dataclass
class Link:
    """Factors between consecutive keyframes ``i -> j``."""
    i: int
    j: int
    imu: object
    wheel: object = None
    gated: bool = False
    verdict: object = None
    imu_W: np.ndarray = field(default=None, repr=False)      # cached square-root information
    imu_W_src: object = field(default=None, repr=False)
    wheel_W: np.ndarray = field(default=None, repr=False)


@dataclass
class MarginalizationPrior:
    """Whitened linear prior ``|r_p + J_p dx|^2`` over the listed keyframes."""
    kf_ids: list
    J: np.ndarray
    r: np.ndarray
    lin: dict                      # kf id -> KeyframeState at linearization

    @property
    def H(self):
        return self.J.T @ self.J

    def residual(self, states):
        dx = np.concatenate([states[k].boxminus(self.lin[k]) for k in self.kf_ids])
        return self.r + self.J @ dx


@dataclass(frozen=True)
class EstimatorConfig:
    window_size: int = 10
    min_stride: int = 2            # camera frames between keyframes
    max_stride: int = 3
    parallax_px: float = 12.0
    focal_px: float = 460.0
    sigma_visual: float = 3e-3     # normalized image units
    loss: str = "huber"
    wheel_loss: str = "huber"
    use_wheel: bool = True
    gating: bool = True
    plane: bool = True
    sigma_plane: float = 0.01
    max_iterations: int = 10
    rel_tol: float = 1e-6
    initial_damping: float = 1e-4
    imu_noise: ImuNoiseModel = ImuNoiseModel()
    wheel_noise: WheelNoiseModel = WheelNoiseModel()
    prior_sigma: tuple = (1e-4, 1e-4, 0.05, 0.02, 2e-3)   # p, theta, v, ba, bg
    gravity: tuple = (0.0, 0.0, -9.81)
    min_triangulation_angle: float = 0.02
    max_inv_depth: float = 10.0


@dataclass
class SlidingWindow:
    states: dict = field(default_factory=dict)       # kf id -> KeyframeState (ordered)
    links: list = field(default_factory=list)
    features: dict = field(default_factory=dict)     # feature id -> Feature
    prior: MarginalizationPrior = None

    @property
    def kf_ids(self):
        return list(self.states)

    def __len__(self):
        return len(self.states)
