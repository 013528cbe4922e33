"""Brute-force references for the exponent engine.

Everything here enumerates conditional distributions Q_{Y|X} on a grid (each
row a multiple of 1/k) and evaluates the defining infima directly.  Inner
minimizations at fixed Q_Y run over the grid points sharing that Q_Y.  No
frontier code is used.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.special import xlogy


class JointGrid:
    def __init__(self, w, silent, p, k):
        w = np.asarray(w, dtype=float)
        self.p = np.asarray(p, dtype=float)
        self.q0 = w[silent]
        active = np.delete(w, silent, axis=0)
        nx, ny = active.shape
        rows = _simplex(ny, k)
        idx = np.array(list(itertools.product(range(len(rows)), repeat=nx)))
        cond = rows[idx]  # (N, nx, ny)
        joint = self.p[None, :, None] * cond
        self.cond = cond
        self.joint = joint
        self.q_y = joint.sum(axis=1)
        d = np.log(self.q0)[None, :] - np.log(active)
        self.dist = (joint * d).sum(axis=(1, 2))
        prod = self.p[None, :, None] * self.q_y[:, None, :]
        self.info = np.maximum((xlogy(joint, joint) - xlogy(joint, prod)).sum(axis=(1, 2)), 0.0)
        ref = self.p[None, :, None] * active[None]
        self.kl_w = np.maximum((xlogy(joint, joint) - xlogy(joint, ref)).sum(axis=(1, 2)), 0.0)
        self.kl_q0 = np.maximum((xlogy(self.q_y, self.q_y) - xlogy(self.q_y, self.q0[None])).sum(axis=1), 0.0)
        keys = np.round(self.q_y * 1e9).astype(np.int64)
        _, self.group = np.unique(keys, axis=0, return_inverse=True)
        self.group = self.group.ravel()
        self.n_groups = int(self.group.max()) + 1

    def group_min(self, values, mask):
        """Per-group minimum of ``values`` over entries in ``mask`` (inf if none)."""
        out = np.full(self.n_groups, np.inf)
        np.minimum.at(out, self.group[mask], values[mask])
        return out

    def rate_below(self, threshold):
        """Per point: min I over its group with D <= threshold (array or scalar)."""
        threshold = np.broadcast_to(np.asarray(threshold, dtype=float), self.dist.shape)
        out = np.full(self.dist.shape, np.inf)
        order = np.lexsort((self.dist, self.group))
        g, dd, ii = self.group[order], self.dist[order], self.info[order]
        starts = np.flatnonzero(np.r_[True, g[1:] != g[:-1]])
        ends = np.r_[starts[1:], g.size]
        for s, e in zip(starts, ends):
            cummin = np.minimum.accumulate(ii[s:e])
            members = order[s:e]
            pos = np.searchsorted(dd[s:e], threshold[members] + 1e-12, side="right")
            vals = np.where(pos > 0, cummin[np.maximum(pos - 1, 0)], np.inf)
            out[members] = vals
        return out


def _simplex(dim, k):
    pts = [c for c in itertools.product(range(k + 1), repeat=dim - 1) if sum(c) <= k]
    return np.array([[*c, k - sum(c)] for c in pts], dtype=float) / k


def pos(x):
    return np.maximum(x, 0.0)


def oracle_eb(g: JointGrid, rate, alpha, beta):
    ok = g.dist <= -beta
    return float(np.min(np.where(ok, g.kl_q0 + pos(g.info - rate), np.inf)))


def oracle_ea(g: JointGrid, rate, alpha, beta):
    u = g.dist + beta - alpha
    e = np.where(u <= 0, pos(g.info - rate), np.where(u > rate - g.info, np.inf, 0.0))
    return float(np.min(g.kl_q0 + e))


def oracle_efa(g, rate, alpha, beta):
    return min(oracle_ea(g, rate, alpha, beta), oracle_eb(g, rate, alpha, beta))


def oracle_emd(g: JointGrid, rate, alpha, beta):
    u = g.dist + beta - alpha
    vals = np.where(u > max(0.0, -alpha), g.info + u, g.info)
    r0 = g.group_min(vals, np.ones_like(vals, dtype=bool))[g.group]
    dp = max(alpha, 0.0) - beta
    ok = (g.dist > dp) & (r0 > rate)
    return float(np.min(np.where(ok, g.kl_w, np.inf)))


def oracle_e1(g: JointGrid, rate, alpha, beta):
    dp = max(alpha, 0.0) - beta
    rd = g.rate_below(g.dist)
    ok = g.dist <= dp
    return float(np.min(np.where(ok, g.kl_w + pos(rd - rate), np.inf)))


def oracle_e2(g: JointGrid, rate, alpha, beta):
    rd = g.rate_below(alpha - beta)
    return float(np.min(g.kl_w + pos(rd - rate)))


def oracle_ede(g, rate, alpha, beta):
    return min(oracle_e1(g, rate, alpha, beta), oracle_e2(g, rate, alpha, beta), oracle_emd(g, rate, alpha, beta))


ORACLES = {
    "E_A": oracle_ea,
    "E_B": oracle_eb,
    "E_FA": oracle_efa,
    "E_MD": oracle_emd,
    "E_1": oracle_e1,
    "E_2": oracle_e2,
    "E_DE": oracle_ede,
}


def all_exponents(g, rate, alpha, beta):
    return {name: f(g, rate, alpha, beta) for name, f in ORACLES.items()}


def r1_d1_grid(p, q_y, d, k):
    """Minimize I + D over couplings of (p, q_y) on a 1/k grid (2x2 only)."""
    p = np.asarray(p, dtype=float)
    q_y = np.asarray(q_y, dtype=float)
    lo, hi = max(0.0, q_y[0] - p[1]), min(p[0], q_y[0])
    best = (math.inf, 0.0, 0.0)
    for t in np.linspace(lo, hi, k + 1):
        q = np.array([[t, p[0] - t], [q_y[0] - t, p[1] - q_y[0] + t]])
        q = np.maximum(q, 0)
        prod = p[:, None] * q_y[None, :]
        i = float((xlogy(q, q) - xlogy(q, prod)).sum())
        dist = float((q * d).sum())
        if i + dist < best[0]:
            best = (i + dist, i, dist)
    return best


class DoubleGrid(JointGrid):
    """Outer grid on Q_Y, inner grid on the couplings of (P, Q_Y); 2x2 only.

    Every coupling with marginals (P, Q_Y) is ``[[t, p0-t], [q0-t, p1-q0+t]]``
    and the inner grid spaces ``t`` evenly over its admissible interval.
    """

    def __init__(self, w, silent, p, k_out, k_in):
        w = np.asarray(w, dtype=float)
        self.p = np.asarray(p, dtype=float)
        self.q0 = w[silent]
        active = np.delete(w, silent, axis=0)
        if active.shape != (2, 2):
            raise ValueError("double grid handles two inputs and two outputs")
        p0, p1 = self.p
        joints, groups = [], []
        for g, j in enumerate(range(k_out + 1)):
            qa = j / k_out
            lo, hi = max(0.0, qa - p1), min(p0, qa)
            t = np.linspace(lo, hi, k_in + 1)
            m = np.stack([np.stack([t, p0 - t], -1), np.stack([qa - t, p1 - qa + t], -1)], 1)
            joints.append(np.maximum(m, 0.0))
            groups.append(np.full(t.size, g))
        joint = np.concatenate(joints)
        self.joint = joint
        self.group = np.concatenate(groups)
        self.n_groups = k_out + 1
        self.q_y = joint.sum(axis=1)
        self.cond = joint / self.p[None, :, None]
        d = np.log(self.q0)[None, :] - np.log(active)
        self.dist = (joint * d).sum(axis=(1, 2))
        prod = self.p[None, :, None] * self.q_y[:, None, :]
        self.info = np.maximum((xlogy(joint, joint) - xlogy(joint, prod)).sum(axis=(1, 2)), 0.0)
        ref = self.p[None, :, None] * active[None]
        self.kl_w = np.maximum((xlogy(joint, joint) - xlogy(joint, ref)).sum(axis=(1, 2)), 0.0)
        self.kl_q0 = np.maximum((xlogy(self.q_y, self.q_y) - xlogy(self.q_y, self.q0[None])).sum(axis=1), 0.0)
