"""Scenario configuration for the chassis simulator."""
from dataclasses import dataclass, field, fields, asdict, replace
import json
import math

import numpy as np

from ..control import PiGains
from ..kinematics import ChassisGeometry

FAULT_TYPES = ("slip", "collision", "abduction")


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending field."""


@dataclass(frozen=True)
class PlantParams:
    mass: float = 10.0              # kg
    yaw_inertia: float = 0.25       # kg m^2
    wheel_mass: float = 0.4         # equivalent wheel inertia J_w / r^2, kg
    wheel_damping: float = 3.0      # rolling resistance per wheel, N/(m/s)
    body_drag: float = 20.0         # ground resistance on the chassis, N/(m/s)
    yaw_drag: float = 0.5           # N*m/(rad/s)
    mu_s: float = 0.6
    mu_k: float = 0.45
    gravity: float = 9.81


@dataclass(frozen=True)
class NoiseParams:
    gyro_noise: float = 1e-3        # rad/s/sqrt(Hz)
    accel_noise: float = 1e-2       # m/s^2/sqrt(Hz)
    gyro_bias_rw: float = 1e-5      # rad/s^2/sqrt(Hz)
    accel_bias_rw: float = 1e-4     # m/s^3/sqrt(Hz)
    gyro_bias0: tuple = (0.0, 0.0, 0.0)
    accel_bias0: tuple = (0.0, 0.0, 0.0)
    encoder_sigma: float = 5e-3     # m/s per encoder sample
    pixel_sigma: float = 1e-3       # normalized image units


@dataclass(frozen=True)
class Rates:
    sim: int = 1000
    control: int = 200
    imu: int = 200
    wheel: int = 50
    camera: int = 10


@dataclass(frozen=True)
class CameraParams:
    fov_u: float = 0.75             # max |u| in normalized coordinates
    fov_v: float = 0.55
    min_depth: float = 0.3
    max_depth: float = 12.0
    focal_px: float = 460.0         # only used to express parallax in pixels
    n_landmarks: int = 300
    box_center: tuple = (1.5, 0.0, 0.7)
    box_size: tuple = (10.0, 10.0, 2.0)


@dataclass(frozen=True)
class Extrinsics:
    """Rigid transforms from sensor frames into the IMU (body) frame.

    ``x_body = R_bc @ x_cam + p_bc`` and likewise for the odometer frame.
    """
    R_bc: tuple = ((0.0, 0.0, 1.0), (-1.0, 0.0, 0.0), (0.0, -1.0, 0.0))
    p_bc: tuple = (0.10, 0.0, 0.10)
    R_bo: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    p_bo: tuple = (-0.05, 0.02, -0.05)

    @property
    def Rbc(self):
        return np.array(self.R_bc, dtype=float)

    @property
    def pbc(self):
        return np.array(self.p_bc, dtype=float)

    @property
    def Rbo(self):
        return np.array(self.R_bo, dtype=float)

    @property
    def pbo(self):
        return np.array(self.p_bo, dtype=float)


@dataclass(frozen=True)
class Fault:
    type: str
    start: float
    duration: float
    params: dict = field(default_factory=dict)

    @property
    def end(self):
        return self.start + self.duration

    def active(self, t):
        return self.start <= t < self.end


@dataclass(frozen=True)
class CommandSegment:
    t: float
    twist: tuple  # (vx, vy, omega) setpoint, chassis frame


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    duration: float = 10.0
    commands: tuple = (CommandSegment(0.0, (0.0, 0.0, 0.0)),)
    faults: tuple = ()
    noise: NoiseParams = NoiseParams()
    geometry: ChassisGeometry = ChassisGeometry(0.15, 0.15, 0.05)
    plant: PlantParams = PlantParams()
    gains: PiGains = PiGains(torque_limit=1.0)
    rates: Rates = Rates()
    camera: CameraParams = CameraParams()
    extrinsics: Extrinsics = Extrinsics()
    initial_pose: tuple = (0.0, 0.0, 0.0)   # x, y, yaw
    seed: int = 0

    def setpoint(self, t):
        current = self.commands[0].twist
        for seg in self.commands:
            if seg.t <= t:
                current = seg.twist
            else:
                break
        return current

    def active_faults(self, t):
        return [f for f in self.faults if f.active(t)]

    @classmethod
    def from_dict(cls, d):
        return _parse_scenario(d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        out = asdict(self)
        out["geometry"] = {"a": self.geometry.a, "b": self.geometry.b, "r": self.geometry.r}
        out["gains"] = {k: (list(v) if isinstance(v, tuple) else v)
                        for k, v in asdict(self.gains).items()}
        if math.isinf(self.gains.torque_limit):
            out["gains"]["torque_limit"] = None
        out["commands"] = [{"t": c.t, "twist": list(c.twist)} for c in self.commands]
        out["faults"] = [asdict(f) for f in self.faults]
        return out

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


def _number(d, key, path, default=None, positive=False, nonneg=False):
    if key not in d:
        if default is None:
            raise ConfigError(f"{path}{key}: required field missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{path}{key}: expected a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{path}{key}: must be positive, got {v!r}")
    if nonneg and v < 0:
        raise ConfigError(f"{path}{key}: must be non-negative, got {v!r}")
    return float(v)


def _vector(d, key, n, path, default):
    if key not in d:
        return default
    v = d[key]
    try:
        arr = [float(x) for x in v]
    except (TypeError, ValueError):
        raise ConfigError(f"{path}{key}: expected a list of {n} numbers") from None
    if len(arr) != n or not all(math.isfinite(x) for x in arr):
        raise ConfigError(f"{path}{key}: expected a list of {n} finite numbers")
    return tuple(arr)


def _sub(cls, d, path):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in d.items():
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown field")
        default = getattr(cls(), key)
        if isinstance(default, tuple):
            if default and isinstance(default[0], tuple):
                try:
                    kwargs[key] = tuple(tuple(float(x) for x in row) for row in value)
                except (TypeError, ValueError):
                    raise ConfigError(f"{path}.{key}: expected a nested list of numbers") from None
            else:
                kwargs[key] = _vector(d, key, len(default), f"{path}.", default)
        elif isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise ConfigError(f"{path}.{key}: expected a positive integer, got {value!r}")
            kwargs[key] = value
        else:
            kwargs[key] = _number(d, key, f"{path}.", nonneg=True)
    return cls(**kwargs)


def _parse_scenario(d):
    if not isinstance(d, dict):
        raise ConfigError("scenario: expected a mapping")
    allowed = {f.name for f in fields(ScenarioConfig)}
    for key in d:
        if key not in allowed:
            raise ConfigError(f"{key}: unknown field")
    duration = _number(d, "duration", "", positive=True)

    raw_cmds = d.get("commands", [{"t": 0.0, "twist": [0.0, 0.0, 0.0]}])
    if not isinstance(raw_cmds, list) or not raw_cmds:
        raise ConfigError("commands: expected a non-empty list")
    cmds = []
    for i, c in enumerate(raw_cmds):
        p = f"commands[{i}]."
        if not isinstance(c, dict):
            raise ConfigError(f"commands[{i}]: expected a mapping")
        cmds.append(CommandSegment(_number(c, "t", p, nonneg=True),
                                   _vector(c, "twist", 3, p, None) or _missing(p + "twist")))
    if any(b.t < a.t for a, b in zip(cmds, cmds[1:])):
        raise ConfigError("commands: segment times must be non-decreasing")

    faults = []
    for i, f in enumerate(d.get("faults", [])):
        p = f"faults[{i}]."
        if not isinstance(f, dict):
            raise ConfigError(f"faults[{i}]: expected a mapping")
        ftype = f.get("type")
        if ftype not in FAULT_TYPES:
            raise ConfigError(f"{p}type: must be one of {FAULT_TYPES}, got {ftype!r}")
        params = f.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError(f"{p}params: expected a mapping")
        faults.append(Fault(ftype, _number(f, "start", p, nonneg=True),
                            _number(f, "duration", p, positive=True), dict(params)))
        if ftype == "slip":
            wheels = params.get("wheels", [1])
            if not wheels or any(w not in (1, 2, 3, 4) for w in wheels):
                raise ConfigError(f"{p}params.wheels: wheel indices must be in 1..4")
            _number(params, "mu_scale", f"{p}params.", default=0.05, positive=True)

    g = d.get("geometry", {})
    try:
        geom = ChassisGeometry(**g) if g else ScenarioConfig().geometry
    except TypeError as exc:
        raise ConfigError(f"geometry: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"geometry: {exc}") from None

    gd = d.get("gains")
    if gd is None:
        gains = ScenarioConfig().gains
    else:
        try:
            gd = dict(gd)
            if gd.get("torque_limit", 0.0) is None:
                gd["torque_limit"] = math.inf
            gains = PiGains(**gd)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"gains: {exc}") from None

    rates = _sub(Rates, d.get("rates"), "rates")
    for name in ("control", "imu", "wheel", "camera"):
        if rates.sim % getattr(rates, name):
            raise ConfigError(f"rates.{name}: must divide rates.sim ({rates.sim})")
    if rates.imu % rates.camera or rates.wheel % rates.camera or rates.imu % rates.wheel:
        raise ConfigError("rates.camera: camera and wheel rates must divide the IMU rate")

    seed = d.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed: expected a non-negative integer, got {seed!r}")

    ext = _sub(Extrinsics, d.get("extrinsics"), "extrinsics")
    for name in ("R_bc", "R_bo"):
        R = np.array(getattr(ext, name))
        if R.shape != (3, 3) or not np.allclose(R @ R.T, np.eye(3), atol=1e-9) \
                or np.linalg.det(R) < 0:
            raise ConfigError(f"extrinsics.{name}: must be a 3x3 rotation matrix")

    return ScenarioConfig(
        name=str(d.get("name", "scenario")),
        duration=duration,
        commands=tuple(cmds),
        faults=tuple(faults),
        noise=_sub(NoiseParams, d.get("noise"), "noise"),
        geometry=geom,
        plant=_sub(PlantParams, d.get("plant"), "plant"),
        gains=gains,
        rates=rates,
        camera=_sub(CameraParams, d.get("camera"), "camera"),
        extrinsics=ext,
        initial_pose=_vector(d, "initial_pose", 3, "", (0.0, 0.0, 0.0)),
        seed=seed,
    )


def _missing(name):
    raise ConfigError(f"{name}: required field missing")

