"""Residuals and Jacobians of the sliding-window cost.

Every keyframe is perturbed locally as ``p + dp``, ``R Exp(dtheta)``,
``v + dv``, ``b_a + dba``, ``b_g + dbg``; Jacobian blocks are returned against
that 15-vector in the order ``(p, theta, v, ba, bg)``.
"""
import math

import numpy as np

from ..preint import corrected_deltas
from ..rotation import exp_so3, log_so3, right_jacobian, right_jacobian_inv, skew, skew_batch

GRAVITY = np.array([0.0, 0.0, -9.81])
PLANE_SIGMA = 0.01
MIN_DEPTH = 1e-3


def mahalanobis(r, cov):
    """Squared Mahalanobis norm r^T cov^-1 r."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance is not positive definite") from None
    if not np.allclose(cov, cov.T, rtol=1e-8, atol=1e-12 * np.abs(cov).max()):
        raise ValueError("covariance is not symmetric")
    return float(r @ np.linalg.solve(cov, r))


def robust_loss(s, kind="huber"):
    """(rho(s), weight) for a squared Mahalanobis norm ``s``; weight = drho/ds."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("squared norm must be non-negative")
    inlier = s <= 1.0
    if kind == "huber":
        root = np.sqrt(np.maximum(s, 1.0))
        rho = np.where(inlier, s, 2.0 * root - 1.0)
        w = np.where(inlier, 1.0, 1.0 / root)
    elif kind == "truncated":
        rho = np.where(inlier, s, 1.0)
        w = np.where(s < 1.0, 1.0, 0.0)
    elif kind == "none":
        rho, w = s.copy(), np.ones_like(s)
    else:
        raise ValueError(f"unknown loss {kind!r}")
    if rho.ndim == 0:
        return float(rho), float(w)
    return rho, w


def sqrt_info(cov):
    """Upper factor ``W`` with ``W^T W = cov^-1`` so that ``|W r|^2`` is the Mahalanobis norm."""
    L = np.linalg.cholesky(0.5 * (cov + cov.T))
    return np.linalg.inv(L)


# ---------------------------------------------------------------- IMU

def imu_residual(pre, x_i, x_j, gravity=GRAVITY):
    """15-vector residual of one pre-integrated IMU link plus Jacobians ``(J_i, J_j)``."""
    g = np.asarray(gravity, float)
    T = pre.dt_total
    Ri, Rj = x_i.R, x_j.R
    dp, dR, dv = corrected_deltas(pre, x_i.b_a, x_i.b_g)
    phi_c = pre.jac("q", "bg") @ (x_i.b_g - pre.linearization_bias[1])

    yp = Ri.T @ (x_j.p - x_i.p - x_i.v * T - 0.5 * g * T * T)
    yv = Ri.T @ (x_j.v - x_i.v - g * T)
    E = dR.T @ Ri.T @ Rj
    rq = log_so3(E)
    r = np.concatenate([yp - dp, rq, yv - dv, x_j.b_a - x_i.b_a, x_j.b_g - x_i.b_g])

    Jri = right_jacobian_inv(rq)
    I3 = np.eye(3)
    Ji = np.zeros((15, 15))
    Jj = np.zeros((15, 15))
    Ji[0:3, 0:3] = -Ri.T
    Ji[0:3, 3:6] = skew(yp)
    Ji[0:3, 6:9] = -Ri.T * T
    Ji[0:3, 9:12] = -pre.jac("p", "ba")
    Ji[0:3, 12:15] = -pre.jac("p", "bg")
    Ji[3:6, 3:6] = -Jri @ Rj.T @ Ri
    Ji[3:6, 12:15] = -Jri @ E.T @ right_jacobian(phi_c) @ pre.jac("q", "bg")
    Ji[6:9, 3:6] = skew(yv)
    Ji[6:9, 6:9] = -Ri.T
    Ji[6:9, 9:12] = -pre.jac("v", "ba")
    Ji[6:9, 12:15] = -pre.jac("v", "bg")
    Ji[9:12, 9:12] = -I3
    Ji[12:15, 12:15] = -I3
    Jj[0:3, 0:3] = Ri.T
    Jj[3:6, 3:6] = Jri
    Jj[6:9, 6:9] = Ri.T
    Jj[9:12, 9:12] = I3
    Jj[12:15, 12:15] = I3
    return r, Ji, Jj


# ---------------------------------------------------------------- wheel

def wheel_residual(pre, x_i, x_j, extrinsics, gated=False):
    """6-vector residual (position, rotation) of one wheel link in the odometer frame."""
    if gated:
        raise RuntimeError("a gated wheel factor must not be evaluated")
    Rbo, pbo = extrinsics.Rbo, extrinsics.pbo
    Ri, Rj = x_i.R, x_j.R
    w = x_j.p - x_i.p + Rj @ pbo
    dp_pred = Rbo.T @ (Ri.T @ w - pbo)
    dRo = Rbo.T @ Ri.T @ Rj @ Rbo
    dRm = pre.delta_R
    E = dRm.T @ dRo
    rq = log_so3(E)
    r = np.concatenate([dp_pred - pre.delta_p, rq])

    Jri = right_jacobian_inv(rq)
    Ji = np.zeros((6, 15))
    Jj = np.zeros((6, 15))
    A = Rbo.T @ Ri.T
    Ji[0:3, 0:3] = -A
    Ji[0:3, 3:6] = Rbo.T @ skew(Ri.T @ w)
    Ji[3:6, 3:6] = -Jri @ dRo.T @ Rbo.T
    Jj[0:3, 0:3] = A
    Jj[0:3, 3:6] = -A @ Rj @ skew(pbo)
    Jj[3:6, 3:6] = Jri @ Rbo.T
    return r, Ji, Jj


# ---------------------------------------------------------------- plane

def plane_residual(x_k, sigma=PLANE_SIGMA):
    """Height above the ground plane and its Jacobian against the keyframe block."""
    J = np.zeros((1, 15))
    J[0, 2] = 1.0
    return np.array([x_k.p[2]]), J, sigma


# ---------------------------------------------------------------- visual

def visual_residual(obs, anchor_uv, x_i, x_j, lam, extrinsics):
    """Reprojection error of an anchor-frame inverse-depth point in frame j.

    Returns ``(r, J_i, J_j, J_lam, valid)``; ``valid`` is False when the point
    falls behind the observing camera.
    """
    uv = obs.uv if hasattr(obs, "uv") else obs
    r, Ja, Jj, Jl, ok = visual_batch(
        np.asarray(anchor_uv, float)[None], np.asarray(uv, float)[None], np.array([lam], float),
        x_i.R[None], x_i.p[None], x_j.R[None], x_j.p[None], extrinsics.Rbc, extrinsics.pbc)
    J_i = np.zeros((2, 15))
    J_j = np.zeros((2, 15))
    J_i[:, 0:6] = Ja[0]
    J_j[:, 0:6] = Jj[0]
    return r[0], J_i, J_j, Jl[0][:, None], bool(ok[0])


def visual_batch(uv_a, uv_j, lam, Ra, pa, Rj, pj, Rbc, pbc):
    """Vectorized reprojection residuals; Jacobians against (p, theta) of both frames."""
    n = len(lam)
    f = np.column_stack([uv_a, np.ones(n)])
    Pc_a = f / lam[:, None]
    Pb_a = Pc_a @ Rbc.T + pbc
    Pw = np.einsum("nij,nj->ni", Ra, Pb_a) + pa
    d = Pw - pj
    Pb_j = np.einsum("nji,nj->ni", Rj, d)
    Pc_j = (Pb_j - pbc) @ Rbc
    z = Pc_j[:, 2]
    ok = z > MIN_DEPTH
    zs = np.where(ok, z, 1.0)
    r = Pc_j[:, :2] / zs[:, None] - uv_j
    r[~ok] = 0.0

    D = np.zeros((n, 2, 3))
    D[:, 0, 0] = 1.0 / zs
    D[:, 1, 1] = 1.0 / zs
    D[:, 0, 2] = -Pc_j[:, 0] / zs ** 2
    D[:, 1, 2] = -Pc_j[:, 1] / zs ** 2
    DC = D @ Rbc.T                              # d r / d Pb_j
    DW = DC @ np.transpose(Rj, (0, 2, 1))       # d r / d Pw
    Jj = np.concatenate([-DW, DC @ skew_batch(Pb_j)], axis=2)
    Ja = np.concatenate([DW, -DW @ Ra @ skew_batch(Pb_a)], axis=2)
    dP = -(Pc_a / lam[:, None]) @ Rbc.T         # d Pb_a / d lam
    Jl = np.einsum("nij,nj->ni", DW @ Ra, dP)
    Ja[~ok] = 0.0
    Jj[~ok] = 0.0
    Jl[~ok] = 0.0
    return r, Ja, Jj, Jl, ok


def triangulate(uv_a, uv_j, Ra, pa, Rj, pj, Rbc, pbc, min_angle=0.01):
    """Depth of an anchor-frame bearing from a second view (midpoint method).

    Returns the anchor-camera depth, or None if the rays are nearly parallel
    or the point lies behind either camera.
    """
    da = Ra @ Rbc @ np.array([uv_a[0], uv_a[1], 1.0])
    dj = Rj @ Rbc @ np.array([uv_j[0], uv_j[1], 1.0])
    ca = pa + Ra @ pbc
    cj = pj + Rj @ pbc
    na, nj = np.linalg.norm(da), np.linalg.norm(dj)
    cosang = float(da @ dj) / (na * nj)
    if math.acos(min(1.0, max(-1.0, cosang))) < min_angle:
        return None
    A = np.column_stack([da, -dj])
    s, t = np.linalg.lstsq(A, cj - ca, rcond=None)[0]
    if s <= 0 or t <= 0:
        return None
    return float(s)
