"""Damped Gauss-Newton over the window and Schur-complement marginalization."""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..preint import ReintegrationRequired, bias_correct, reintegrate
from .factors import (imu_residual, plane_residual, robust_loss, sqrt_info, visual_batch,
                      wheel_residual)
from .state import STATE_DIM, MarginalizationPrior


@dataclass
class SolveReport:
    iterations: int
    initial_cost: float
    final_cost: float
    costs: list
    accepted: int
    converged: bool
    message: str = ""


class _Normal:
    """Accumulates the cost and, optionally, the Gauss-Newton normal equations."""

    def __init__(self, size, jac):
        self.size = size
        self.jac = jac
        self.H = np.zeros((size, size)) if jac else None
        self.g = np.zeros(size) if jac else None
        self.cost = 0.0
        self.n = 0

    def dense(self, r, blocks, rho):
        """``blocks`` is a list of (column offset, Jacobian), already whitened and weighted."""
        self.cost += rho
        self.n += len(r)
        if self.jac:
            cols = np.concatenate([np.arange(c, c + J.shape[1]) for c, J in blocks])
            J = np.hstack([J for _, J in blocks])
            self.H[np.ix_(cols, cols)] += J.T @ J
            self.g[cols] += J.T @ r

    def batch(self, r, blocks, rho):
        """``r`` is (n, m); each block is (column offsets (n,), Jacobians (n, m, k))."""
        n, m = r.shape
        self.cost += float(np.sum(rho))
        self.n += n * m
        if not self.jac or n == 0:
            return
        cols = np.concatenate([c[:, None] + np.arange(J.shape[2]) for c, J in blocks], axis=1)
        J = np.concatenate([J for _, J in blocks], axis=2)
        HB = np.einsum("nmi,nmj->nij", J, J)
        gB = np.einsum("nmi,nm->ni", J, r)
        flat = cols[:, :, None] * self.size + cols[:, None, :]
        self.H += np.bincount(flat.ravel(), HB.ravel(), self.size * self.size).reshape(self.H.shape)
        self.g += np.bincount(cols.ravel(), gB.ravel(), self.size)


def _robust_block(r, blocks, kind):
    s = float(r @ r)
    rho, w = robust_loss(s, kind)
    sw = np.sqrt(w)
    return r * sw, [(c, J * sw) for c, J in blocks], rho


class Layout:
    """Column offsets of keyframes and active inverse depths."""

    def __init__(self, kf_ids, feature_ids):
        self.kf_ids = list(kf_ids)
        self.kf = {k: n * STATE_DIM for n, k in enumerate(kf_ids)}
        base = len(kf_ids) * STATE_DIM
        self.feat = {f: base + n for n, f in enumerate(feature_ids)}
        self.size = base + len(feature_ids)


def active_features(window):
    """Triangulated features with at least one observation besides the anchor."""
    return [f for f in window.features.values()
            if f.triangulated and f.anchor_frame in window.states
            and any(k != f.anchor_frame and k in window.states for k in f.obs)]


class _VisualSet:
    """Index arrays of every (anchor, observer) pair, fixed for one solve."""

    def __init__(self, window, feats, layout):
        pos = {k: n for n, k in enumerate(layout.kf_ids)}
        fid, a, j, uva, uvj = [], [], [], [], []
        for f in feats:
            for k, uv in f.obs.items():
                if k == f.anchor_frame or k not in pos:
                    continue
                fid.append(f.id)
                a.append(pos[f.anchor_frame])
                j.append(pos[k])
                uva.append(f.anchor_uv)
                uvj.append(uv)
        self.fid = fid
        self.a = np.array(a, dtype=int)
        self.j = np.array(j, dtype=int)
        self.uva = np.array(uva, dtype=float).reshape(-1, 2)
        self.uvj = np.array(uvj, dtype=float).reshape(-1, 2)
        self.col_a = self.a * STATE_DIM
        self.col_j = self.j * STATE_DIM
        self.col_l = np.array([layout.feat[f] for f in fid], dtype=int)


def evaluate(window, cfg, extrinsics, states, lams, layout, jac=True, select=None, vis=None):
    """Stack every factor; ``select`` optionally restricts to a factor subset.

    ``select`` is a dict with keys ``prior`` (bool), ``links`` (set of link
    indices), ``plane`` (set of kf ids) and ``features`` (set of feature ids).
    """
    b = _Normal(layout.size, jac)
    g = np.asarray(cfg.gravity, float)
    use = (lambda key, item: True) if select is None else \
        (lambda key, item: item in select[key] if key != "prior" else select["prior"])

    pr = window.prior
    if pr is not None and use("prior", None):
        r = pr.residual(states)
        blocks = []
        for n, k in enumerate(pr.kf_ids):
            blocks.append((layout.kf[k], pr.J[:, n * STATE_DIM:(n + 1) * STATE_DIM]))
        b.dense(r, blocks, float(r @ r))

    for n, link in enumerate(window.links):
        if not use("links", n):
            continue
        xi, xj = states[link.i], states[link.j]
        r, Ji, Jj = imu_residual(link.imu, xi, xj, g)
        W = link.imu_W
        wr = W @ r
        b.dense(wr, [(layout.kf[link.i], W @ Ji), (layout.kf[link.j], W @ Jj)], float(wr @ wr))
        if link.wheel is not None and not link.gated:
            r, Ji, Jj = wheel_residual(link.wheel, xi, xj, extrinsics)
            W = link.wheel_W
            rw, blocks, rho = _robust_block(W @ r, [(layout.kf[link.i], W @ Ji),
                                                     (layout.kf[link.j], W @ Jj)], cfg.wheel_loss)
            b.dense(rw, blocks, rho)

    if cfg.plane:
        for k, x in states.items():
            if not use("plane", k):
                continue
            r, J, sigma = plane_residual(x, cfg.sigma_plane)
            b.dense(r / sigma, [(layout.kf[k], J[:, 0:3] / sigma)], float((r[0] / sigma) ** 2))

    if vis is None:
        feats = [f for f in active_features(window) if select is None or f.id in select["features"]]
        vis = _VisualSet(window, feats, layout)
    if len(vis.fid):
        lam = np.array([lams[f] for f in vis.fid])
        Rs = np.array([states[k].R for k in layout.kf_ids])
        ps = np.array([states[k].p for k in layout.kf_ids])
        r, Ja, Jj, Jl, ok = visual_batch(vis.uva, vis.uvj, lam, Rs[vis.a], ps[vis.a],
                                         Rs[vis.j], ps[vis.j], extrinsics.Rbc, extrinsics.pbc)
        inv = 1.0 / cfg.sigma_visual
        r = r * inv
        s = np.einsum("ni,ni->n", r, r)
        rho, w = robust_loss(s, cfg.loss)
        rho = np.where(ok, rho, 0.0)
        sw = np.sqrt(w)
        r = r * sw[:, None]
        blocks = []
        if jac:
            sw = sw * inv
            blocks = [(vis.col_a, Ja * sw[:, None, None]), (vis.col_j, Jj * sw[:, None, None]),
                      (vis.col_l, (Jl * sw[:, None])[:, :, None])]
        b.batch(r, blocks, rho)
    return b


def _prepare_links(window):
    for link in window.links:
        if link.imu_W is None or link.imu_W_src is not link.imu:
            link.imu_W = sqrt_info(link.imu.covariance)
            link.imu_W_src = link.imu
        if link.wheel is not None and link.wheel_W is None:
            link.wheel_W = sqrt_info(link.wheel.covariance)


def refresh_bias(window, states):
    """Re-integrate IMU links whose bias estimate left the first-order range."""
    for link in window.links:
        x = states[link.i]
        try:
            bias_correct(link.imu, (x.b_a, x.b_g))
        except ReintegrationRequired:
            link.imu = reintegrate(link.imu, (x.b_a, x.b_g))


def _apply(states, lams, layout, dx):
    new_states = {k: x.boxplus(dx[layout.kf[k]:layout.kf[k] + STATE_DIM]) for k, x in states.items()}
    new_lams = {f: lams[f] + dx[c] for f, c in layout.feat.items()}
    return new_states, new_lams


def optimize(window, cfg, extrinsics):
    """Levenberg-damped Gauss-Newton on the whole window; updates it in place."""
    refresh_bias(window, window.states)
    _prepare_links(window)
    feats = active_features(window)
    layout = Layout(window.kf_ids, [f.id for f in feats])
    states = dict(window.states)
    lams = {f.id: f.inv_depth for f in feats}
    vis = _VisualSet(window, feats, layout)
    b = evaluate(window, cfg, extrinsics, states, lams, layout, vis=vis)
    cost = b.cost
    costs = [cost]
    mu = cfg.initial_damping
    accepted = 0
    converged = False
    message = ""
    it = 0
    while it < cfg.max_iterations:
        it += 1
        H, grad = b.H, b.g
        step = None
        while mu < 1e12:
            try:
                c = scipy.linalg.cho_factor(H + mu * np.eye(layout.size), check_finite=False)
                dx = -scipy.linalg.cho_solve(c, grad, check_finite=False)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            cand_s, cand_l = _apply(states, lams, layout, dx)
            if any(v <= 0 or v > cfg.max_inv_depth for v in cand_l.values()):
                mu *= 10.0
                continue
            new = evaluate(window, cfg, extrinsics, cand_s, cand_l, layout, jac=False, vis=vis).cost
            if np.isfinite(new) and new < cost:
                step = (cand_s, cand_l, new)
                mu = max(mu / 3.0, 1e-12)
                break
            mu *= 10.0
        if step is None:
            message = "damping escalated without a descent step"
            converged = True
            break
        states, lams, new_cost = step
        accepted += 1
        rel = (cost - new_cost) / max(cost, 1e-300)
        cost = new_cost
        costs.append(cost)
        if rel < cfg.rel_tol:
            converged = True
            break
        b = evaluate(window, cfg, extrinsics, states, lams, layout, vis=vis)
    window.states = states
    for f in feats:
        f.inv_depth = lams[f.id]
    return SolveReport(it, costs[0], cost, costs, accepted, converged, message)


def marginalize(window, cfg, extrinsics):
    """Fold the oldest keyframe and the features anchored on it into the prior."""
    kf_ids = window.kf_ids
    old = kf_ids[0]
    _prepare_links(window)
    links = {n for n, l in enumerate(window.links) if l.i == old or l.j == old}
    feats = {f.id for f in active_features(window) if f.anchor_frame == old}
    if not links and not feats and not cfg.plane and not (
            window.prior is not None and old in window.prior.kf_ids):
        _drop_frame(window, old, links)
        return window.prior
    # the existing prior always joins the marginalized set so only one prior survives
    touches_prior = window.prior is not None
    select = {"prior": touches_prior, "links": links, "plane": {old}, "features": feats}

    involved = {old}
    for n in links:
        involved |= {window.links[n].i, window.links[n].j}
    if touches_prior:
        involved |= set(window.prior.kf_ids)
    for f in window.features.values():
        if f.id in feats:
            involved |= {k for k in f.obs if k in window.states}
    keep = [k for k in kf_ids if k in involved and k != old]
    order = [old] + keep
    layout = Layout(order, sorted(feats))
    sub = {k: window.states[k] for k in order}
    lams = {f: window.features[f].inv_depth for f in feats}
    b = evaluate(window, cfg, extrinsics, sub, lams, layout, select=select)

    new_prior = None
    if b.n and keep:
        H, g = b.H, b.g
        m = np.r_[np.arange(STATE_DIM), np.arange(len(order) * STATE_DIM, layout.size)]
        k = np.arange(STATE_DIM, len(order) * STATE_DIM)
        Hmm = H[np.ix_(m, m)]
        Hmk = H[np.ix_(m, k)]
        Hmm_inv = np.linalg.pinv(0.5 * (Hmm + Hmm.T), rcond=1e-12, hermitian=True)
        Hs = H[np.ix_(k, k)] - Hmk.T @ Hmm_inv @ Hmk
        gs = g[k] - Hmk.T @ Hmm_inv @ g[m]
        Hs = 0.5 * (Hs + Hs.T)
        S, V = np.linalg.eigh(Hs)
        tol = 1e-10 * max(S.max(), 1e-300)
        pos = S > tol
        S, V = S[pos], V[:, pos]
        Jp = np.sqrt(S)[:, None] * V.T
        rp = (V.T @ gs) / np.sqrt(S)
        new_prior = MarginalizationPrior(keep, Jp, rp, {kk: window.states[kk] for kk in keep})

    window.prior = new_prior
    _drop_frame(window, old, links)
    return window.prior


def _drop_frame(window, old, links):
    del window.states[old]
    window.links = [l for n, l in enumerate(window.links) if n not in links]
    window.features = {fid: f for fid, f in window.features.items() if f.anchor_frame != old}
    for f in window.features.values():
        f.obs.pop(old, None)
