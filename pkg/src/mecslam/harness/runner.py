"""One simulation pass, several estimator variants, metrics and output files."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
import json
import os

import numpy as np

from ..estimator import EstimatorConfig, run_estimator
from ..simworld import ScenarioConfig, run_scenario
from .metrics import Trajectory, compute_metrics, truth_trajectory
from .odometry import wheel_inertial_odometry, wheel_odometry


class EstimatorVariant(str, Enum):
    """Factor subsets compared in an experiment.

    wheel-odom: encoder dead reckoning only.
    wheel-inertial-odom: chained wheel pre-integration (encoders plus gyro).
    vio-no-wheel: sliding window with visual, IMU and plane factors.
    full-gated: every factor, wheel factors removed on anomalous intervals.
    full-ungated: every factor, wheel factors always kept.
    """
    WHEEL_ODOM = "wheel-odom"
    WHEEL_INERTIAL_ODOM = "wheel-inertial-odom"
    VIO_NO_WHEEL = "vio-no-wheel"
    FULL_GATED = "full-gated"
    FULL_UNGATED = "full-ungated"


ALL_VARIANTS = tuple(v.value for v in EstimatorVariant)


def variant_config(variant, base=None):
    """Estimator settings implementing a sliding-window variant."""
    base = base or EstimatorConfig()
    v = EstimatorVariant(variant)
    if v is EstimatorVariant.VIO_NO_WHEEL:
        return replace(base, use_wheel=False)
    if v is EstimatorVariant.FULL_GATED:
        return replace(base, use_wheel=True, gating=True)
    if v is EstimatorVariant.FULL_UNGATED:
        return replace(base, use_wheel=True, gating=False)
    raise ValueError(f"{v.value} does not use the sliding-window estimator")


@dataclass
class VariantRun:
    variant: str
    trajectory: Trajectory
    metrics: object
    result: object = None        # EstimatorResult for sliding-window variants


@dataclass
class ExperimentResult:
    scenario: ScenarioConfig
    log: object
    runs: dict = field(default_factory=dict)   # variant name -> VariantRun

    @property
    def metrics(self):
        return {k: r.metrics for k, r in self.runs.items()}


def run_variant(log, variant, estimator_config=None):
    """Run one variant on a log without touching the log."""
    v = EstimatorVariant(variant)
    truth = truth_trajectory(log)
    if v is EstimatorVariant.WHEEL_ODOM:
        traj = wheel_odometry(log)
        return VariantRun(v.value, traj, compute_metrics(traj, truth))
    if v is EstimatorVariant.WHEEL_INERTIAL_ODOM:
        cfg = estimator_config or EstimatorConfig()
        traj = wheel_inertial_odometry(log, cfg.wheel_noise)
        return VariantRun(v.value, traj, compute_metrics(traj, truth))
    res = run_estimator(log, variant_config(v, estimator_config))
    traj = Trajectory(res.t, res.positions, res.quaternions)
    return VariantRun(v.value, traj, compute_metrics(traj, truth, res.verdicts), res)


def _run_packed(args):
    return run_variant(*args)


def run_experiment(scenario, variants=ALL_VARIANTS, estimator_config=None, out_dir=None,
                   workers=1):
    """Simulate once, run every variant on the same log, optionally write outputs."""
    if not isinstance(scenario, ScenarioConfig):
        scenario = ScenarioConfig.from_dict(scenario)
    names = [EstimatorVariant(v).value for v in variants]
    log = run_scenario(scenario)
    out = ExperimentResult(scenario, log)
    jobs = [(log, v, estimator_config) for v in names]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_packed, jobs))
    else:
        runs = [_run_packed(j) for j in jobs]
    for r in runs:
        out.runs[r.variant] = r
    if out_dir is not None:
        write_experiment(out, out_dir)
    return out


# ---------------------------------------------------------------- output files

def write_trajectory(path, traj):
    np.savetxt(path, np.column_stack([traj.t, traj.p, traj.q]), fmt="%.17g", delimiter=",",
               header="t,px,py,pz,qw,qx,qy,qz", comments="")


def read_trajectory(path):
    d = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Trajectory(d[:, 0], d[:, 1:4], d[:, 4:8])


def write_metrics(path, metrics):
    with open(path, "w") as fh:
        for k, v in metrics.as_dict().items():
            fh.write(f"{k} = {v!r}\n")


def read_metrics(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                v = v.strip()
                out[k.strip()] = int(v) if v.lstrip("-").isdigit() else float(v)
    return out


def write_states(path, result):
    """Per-keyframe estimates: time, pose, velocity, biases and the gating flag of the link ending there."""
    flags = [False] + list(result.gated)
    rows = []
    for n, s in enumerate(result.states):
        g = flags[n] if n < len(flags) else False
        rows.append([s.t, *s.p, *s.q, *s.v, *s.b_a, *s.b_g, float(g)])
    np.savetxt(path, np.array(rows).reshape(-1, 18), fmt="%.17g", delimiter=",", comments="",
               header="t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,bax,bay,baz,bgx,bgy,bgz,gated")


def write_verdicts(path, verdicts):
    rows = [{"t0": v.t0, "t1": v.t1, "fused": v.fused, **v.diagnostics} for v in verdicts]
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=1)


def write_experiment(result, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for name, run in result.runs.items():
        write_trajectory(os.path.join(out_dir, f"trajectory_{name}.csv"), run.trajectory)
        write_metrics(os.path.join(out_dir, f"metrics_{name}.txt"), run.metrics)
        if run.result is not None:
            write_states(os.path.join(out_dir, f"states_{name}.csv"), run.result)
            write_verdicts(os.path.join(out_dir, f"verdicts_{name}.json"), run.result.verdicts)
    write_trajectory(os.path.join(out_dir, "trajectory_ground_truth.csv"),
                     truth_trajectory(result.log))
