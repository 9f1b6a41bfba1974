"""SO(3) and quaternion helpers.

Quaternions are stored as numpy arrays ``[w, x, y, z]`` (Hamilton convention,
active rotation). Perturbations are applied on the right: ``R <- R Exp(dtheta)``.
"""
import math

import numpy as np

_SMALL = 1e-8


def skew(w):
    x, y, z = w
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def exp_so3(phi):
    """Rodrigues formula, rotation vector -> rotation matrix."""
    phi = np.asarray(phi, dtype=float)
    theta = math.sqrt(phi @ phi)
    K = skew(phi)
    if theta < _SMALL:
        return np.eye(3) + K + 0.5 * K @ K
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * K @ K


def log_so3(R):
    """Inverse of :func:`exp_so3`; valid for rotation angles in [0, pi)."""
    cos_t = (np.trace(R) - 1.0) * 0.5
    cos_t = min(1.0, max(-1.0, cos_t))
    theta = math.acos(cos_t)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-6:
        return 0.5 * w * (1.0 + theta * theta / 6.0)
    if math.pi - theta < 1e-6:
        # near pi the antisymmetric part vanishes; use the symmetric part
        B = 0.5 * (R + np.eye(3))
        axis = np.sqrt(np.clip(np.diag(B), 0.0, None))
        k = int(np.argmax(axis))
        axis[:] = B[k] / axis[k]
        axis /= np.linalg.norm(axis)
        if w @ axis < 0:
            axis = -axis
        return theta * axis
    return theta / (2.0 * math.sin(theta)) * w


def right_jacobian(phi):
    """Right Jacobian of SO(3): Exp(phi + d) ~= Exp(phi) Exp(Jr(phi) d)."""
    phi = np.asarray(phi, dtype=float)
    theta = math.sqrt(phi @ phi)
    K = skew(phi)
    if theta < 1e-5:
        return np.eye(3) - 0.5 * K + K @ K / 6.0
    t2 = theta * theta
    return (np.eye(3) - (1.0 - math.cos(theta)) / t2 * K
            + (theta - math.sin(theta)) / (t2 * theta) * K @ K)


def right_jacobian_inv(phi):
    phi = np.asarray(phi, dtype=float)
    theta = math.sqrt(phi @ phi)
    K = skew(phi)
    if theta < 1e-5:
        return np.eye(3) + 0.5 * K + K @ K / 12.0
    t2 = theta * theta
    c = 1.0 / t2 - (1.0 + math.cos(theta)) / (2.0 * theta * math.sin(theta))
    return np.eye(3) + 0.5 * K + c * K @ K


def quat_to_rot(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def rot_to_quat(R):
    """Shepperd's method; returns a unit quaternion with w >= 0."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s,
                      (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s,
                      0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_exp(phi):
    phi = np.asarray(phi, dtype=float)
    theta = math.sqrt(phi @ phi)
    if theta < _SMALL:
        q = np.array([1.0, 0.5 * phi[0], 0.5 * phi[1], 0.5 * phi[2]])
        return q / np.linalg.norm(q)
    s = math.sin(0.5 * theta) / theta
    return np.array([math.cos(0.5 * theta), s * phi[0], s * phi[1], s * phi[2]])


def quat_log(q):
    return log_so3(quat_to_rot(q))


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def yaw_quat(yaw):
    return np.array([math.cos(0.5 * yaw), 0.0, 0.0, math.sin(0.5 * yaw)])


def quat_yaw(q):
    w, x, y, z = q
    return math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0:
        a += 2.0 * math.pi
    return a - math.pi


# batched helpers (leading axis = batch) used by the vectorized visual factor

def skew_batch(w):
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out
