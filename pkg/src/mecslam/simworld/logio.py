"""Versioned line-delimited serialization of :class:`SensorLog`.

One whitespace-delimited text file per stream. The first line of each file is
``# mecslam-sensorlog v1 <stream> columns: <c1> <c2> ...``; the time column
comes first in every time-indexed stream.
"""
import json
import os

import numpy as np

from .config import ScenarioConfig
from .scenario import SensorLog

FORMAT = "mecslam-sensorlog"
VERSION = 1

STREAMS = {
    "ground_truth": ("t px py pz qw qx qy qz vx vy vz wx wy wz c1 c2 c3 c4 s1 s2 s3 s4",
                     lambda L: np.column_stack([L.gt_t, L.gt_p, L.gt_q, L.gt_v, L.gt_w,
                                                L.gt_contact, L.gt_wheel])),
    "imu": ("t gx gy gz ax ay az bgx bgy bgz bax bay baz",
            lambda L: np.column_stack([L.imu_t, L.imu_gyro, L.imu_accel,
                                       L.imu_bias_gyro, L.imu_bias_accel])),
    "wheels": ("t v1 v2 v3 v4", lambda L: np.column_stack([L.wheel_t, L.wheel_speeds])),
    "frames": ("t", lambda L: L.frame_t[:, None]),
    "features": ("frame_id feature_id u v",
                 lambda L: np.column_stack([L.feat_frame, L.feat_id, L.feat_uv])),
    "landmarks": ("x y z", lambda L: L.landmarks),
    "control": ("t sp_vx sp_vy sp_w meas_vx meas_vy meas_w tau1 tau2 tau3 tau4 constraint_err",
                lambda L: np.column_stack([L.ctrl_t, L.ctrl_setpoint, L.ctrl_measured,
                                           L.ctrl_torque, L.ctrl_constraint])),
}


def header(stream, columns):
    return f"{FORMAT} v{VERSION} {stream} columns: {columns}"


def write_table(path, stream, columns, data):
    np.savetxt(path, np.asarray(data, dtype=float).reshape(-1, len(columns.split())),
               fmt="%.17g", header=header(stream, columns), comments="# ")


def read_table(path, stream):
    with open(path) as fh:
        first = fh.readline()
    expected = f"# {FORMAT} v{VERSION} {stream} "
    if not first.startswith(expected):
        raise ValueError(f"{path}: not a {FORMAT} v{VERSION} '{stream}' stream")
    ncol = len(first.split("columns:")[1].split())
    return np.loadtxt(path, comments="#", ndmin=2).reshape(-1, ncol)


def write_log(log, directory):
    os.makedirs(directory, exist_ok=True)
    for stream, (columns, getter) in STREAMS.items():
        write_table(os.path.join(directory, f"{stream}.txt"), stream, columns, getter(log))
    with open(os.path.join(directory, "summary.json"), "w") as fh:
        json.dump({"format": FORMAT, "version": VERSION, **log.summary}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(directory, "scenario.json"), "w") as fh:
        json.dump(log.config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_log(directory):
    config = ScenarioConfig.load(os.path.join(directory, "scenario.json"))
    t = {s: read_table(os.path.join(directory, f"{s}.txt"), s) for s in STREAMS}
    gt, imu, ctrl = t["ground_truth"], t["imu"], t["control"]
    with open(os.path.join(directory, "summary.json")) as fh:
        summary = json.load(fh)
    summary.pop("format", None)
    summary.pop("version", None)
    return SensorLog(
        config=config,
        gt_t=gt[:, 0], gt_p=gt[:, 1:4], gt_q=gt[:, 4:8], gt_v=gt[:, 8:11], gt_w=gt[:, 11:14],
        gt_contact=gt[:, 14:18].astype(np.int8), gt_wheel=gt[:, 18:22],
        imu_t=imu[:, 0], imu_gyro=imu[:, 1:4], imu_accel=imu[:, 4:7],
        imu_bias_gyro=imu[:, 7:10], imu_bias_accel=imu[:, 10:13],
        wheel_t=t["wheels"][:, 0], wheel_speeds=t["wheels"][:, 1:5],
        frame_t=t["frames"][:, 0],
        feat_frame=t["features"][:, 0].astype(int), feat_id=t["features"][:, 1].astype(int),
        feat_uv=t["features"][:, 2:4],
        landmarks=t["landmarks"],
        ctrl_t=ctrl[:, 0], ctrl_setpoint=ctrl[:, 1:4], ctrl_measured=ctrl[:, 4:7],
        ctrl_torque=ctrl[:, 7:11], ctrl_constraint=ctrl[:, 11],
        summary=summary,
    )
