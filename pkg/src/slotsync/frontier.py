"""Relative-entropy frontiers over couplings with fixed marginals.

Every inner problem of the exponent engine has the form

    minimize  KL(Q || ref)  over joints Q with row sums p and column sums q

traced against a linear functional ``D(Q) = sum Q * d``.  With
``ref = p (x) q`` the objective is the mutual information of ``Q``; with
``ref = p * W`` it is the conditional divergence from the channel.

The minimizers form a one-parameter family

    Q_s(x, y) = ref(x, y) a(x) b(y) exp(-s d(x, y)),

``s = 0`` giving the unconstrained minimizer, ``s -> +inf`` the smallest
reachable ``D`` and ``s -> -inf`` the largest.  Because the objective is
strictly convex on the coupling polytope, KL along the frontier is a convex
function of ``D`` and every point is unique.

Two solvers are provided.  When the supports of both marginals have two
letters the polytope is a segment and everything is available in closed form.
Otherwise the dual potentials ``(a, b)`` are found by damped Newton iterations
on the concave dual, started from the transportation-LP duals at large ``|s|``.
"""
from __future__ import annotations

import math
import warnings
from bisect import bisect_left

import numpy as np
from scipy.optimize import brentq, linprog
from scipy.special import xlogy

# beyond this slope the entropic point is used as the limit of the frontier
S_LIMIT = 1e6
_LP_START = 1.0
_NEWTON_MAXITER = 300
_RESIDUAL_WARN = 1e-7
_MAX_STEP = 10.0


# scipy's versions carry array-API overhead that dominates on these tiny arrays
def _lse_cols(z):
    m = z.max(axis=0)
    return m + np.log(np.exp(z - m).sum(axis=0))


def _softmax_cols(z):
    e = np.exp(z - z.max(axis=0))
    return e / e.sum(axis=0)


class ConvergenceWarning(RuntimeWarning):
    pass


def transport_bounds(p: np.ndarray, q: np.ndarray, d: np.ndarray) -> tuple[float, float]:
    """(min, max) of ``sum Q d`` over couplings of ``p`` and ``q``."""
    lo = _transport(p, q, d)[0]
    hi = -_transport(p, q, -d)[0]
    return lo, hi


def _transport(p, q, d):
    """Solve the transportation LP; returns (value, row duals, column duals)."""
    a, b = d.shape
    rows = np.kron(np.eye(a), np.ones((1, b)))
    cols = np.kron(np.ones((1, a)), np.eye(b))[:-1]
    res = linprog(
        d.ravel(),
        A_eq=np.vstack([rows, cols]),
        b_eq=np.concatenate([p, q[:-1]]),
        bounds=(0, None),
        method="highs",
    )
    if res.status != 0:
        raise RuntimeError(f"transportation LP failed: {res.message}")
    y = res.eqlin.marginals
    return float(res.fun), y[:a], np.concatenate([y[a:], [0.0]])


class Frontier:
    """Common interface; concrete classes work on the restricted support.

    Locations (``loc``) are solver-specific handles for points on the
    frontier.  ``None`` means infeasible.
    """

    def __init__(self, p, q, log_ref, d):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        self.shape = (p.size, q.size)
        self.rows = np.flatnonzero(p > 0)
        self.cols = np.flatnonzero(q > 0)
        sub = np.ix_(self.rows, self.cols)
        self.p = p[self.rows] / p[self.rows].sum()
        self.q = q[self.cols] / q[self.cols].sum()
        self.log_ref = np.asarray(log_ref, dtype=float)[sub]
        self.d = np.asarray(d, dtype=float)[sub]
        if not np.all(np.isfinite(self.log_ref)) or not np.all(np.isfinite(self.d)):
            raise ValueError("reference and distortion must be finite on the support")
        self.tol = 1e-12 * (1.0 + float(np.abs(self.d).max()))

    # concrete classes fill these in
    d0: float
    kl0: float
    d_min: float
    d_max: float

    def kl(self, loc) -> float:
        raise NotImplementedError

    def dist(self, loc) -> float:
        raise NotImplementedError

    def _coupling(self, loc) -> np.ndarray:
        raise NotImplementedError

    def _solve_d(self, delta: float, side: int):
        """Frontier point with D = delta, strictly between d0 and the end on ``side``."""
        raise NotImplementedError

    def _solve_kl(self, r: float, side: int):
        """Frontier point with KL = r on ``side`` (-1: toward d_min, +1: toward d_max)."""
        raise NotImplementedError

    loc0 = None
    loc_min = None
    loc_max = None

    def coupling(self, loc) -> np.ndarray:
        """Full-size joint matrix at a location."""
        out = np.zeros(self.shape)
        out[np.ix_(self.rows, self.cols)] = self._coupling(loc)
        return out

    # queries ---------------------------------------------------------------
    def locate_at(self, delta: float):
        """Minimizer subject to D = delta."""
        if delta < self.d0:
            return self.locate_below(delta)
        if delta > self.d0:
            return self.locate_above(delta)
        return self.loc0

    def locate_below(self, delta: float):
        """Minimizer subject to D <= delta."""
        if delta >= self.d0:
            return self.loc0
        if delta < self.d_min - self.tol:
            return None
        if delta <= self.d_min + self.tol:
            return self.loc_min
        return self._solve_d(delta, -1)

    def locate_above(self, delta: float):
        """Minimizer subject to D >= delta."""
        if delta <= self.d0:
            return self.loc0
        if delta > self.d_max + self.tol:
            return None
        if delta >= self.d_max - self.tol:
            return self.loc_max
        return self._solve_d(delta, 1)

    def locate_within(self, r: float, side: int = -1):
        """Point minimizing (side=-1) or maximizing (side=+1) D subject to KL <= r."""
        if r < self.kl0 - 1e-12:
            return None
        end = self.loc_min if side < 0 else self.loc_max
        if r >= self.kl(end):
            return end
        if r <= self.kl0:
            return self.loc0
        return self._solve_kl(r, side)

    def min_kl_below(self, delta: float) -> float:
        loc = self.locate_below(delta)
        return math.inf if loc is None else self.kl(loc)

    def min_kl_above(self, delta: float) -> float:
        loc = self.locate_above(delta)
        return math.inf if loc is None else self.kl(loc)

    def min_kl_at(self, delta: float) -> float:
        loc = self.locate_at(delta)
        return math.inf if loc is None else self.kl(loc)

    def min_d_within(self, r: float) -> float:
        loc = self.locate_within(r, -1)
        return math.inf if loc is None else self.dist(loc)

    def locate_slope(self, s: float):
        raise NotImplementedError


class FixedFrontier(Frontier):
    """A single admissible coupling (one marginal is a point mass)."""

    def __init__(self, p, q, log_ref, d):
        super().__init__(p, q, log_ref, d)
        self._q = np.outer(self.p, self.q)
        self.d0 = self.d_min = self.d_max = float((self._q * self.d).sum())
        self.kl0 = float((xlogy(self._q, self._q) - self._q * self.log_ref).sum())
        self.loc0 = self.loc_min = self.loc_max = 0.0

    def kl(self, loc):
        return self.kl0

    def dist(self, loc):
        return self.d0

    def _coupling(self, loc):
        return self._q

    def locate_slope(self, s):
        return 0.0


class SegmentFrontier(Frontier):
    """Exact frontier when both supports have two letters.

    Couplings are ``[[t, p0 - t], [q0 - t, p1 - q0 + t]]`` for ``t`` in an
    interval; ``D`` is affine in ``t`` and the slope-``s`` minimizer solves a
    quadratic.
    """

    def __init__(self, p, q, log_ref, d):
        super().__init__(p, q, log_ref, d)
        p0, p1 = self.p
        q0 = self.q[0]
        self.lo = max(0.0, q0 - p1)
        self.hi = min(p0, q0)
        lr, dd = self.log_ref, self.d
        self.c_ref = lr[0, 0] + lr[1, 1] - lr[0, 1] - lr[1, 0]
        self.c_d = dd[0, 0] + dd[1, 1] - dd[0, 1] - dd[1, 0]
        self.loc0 = self.locate_slope(0.0)
        self.d0 = self.dist(self.loc0)
        self.kl0 = self.kl(self.loc0)
        if self.c_d > 0:
            self.loc_min, self.loc_max = self.lo, self.hi
        elif self.c_d < 0:
            self.loc_min, self.loc_max = self.hi, self.lo
        else:
            self.loc_min = self.loc_max = self.loc0
        self.d_min = min(self.d0, self.dist(self.loc_min))
        self.d_max = max(self.d0, self.dist(self.loc_max))

    def _coupling(self, t):
        p0, p1 = self.p
        q0 = self.q[0]
        m = np.array([[t, p0 - t], [q0 - t, p1 - q0 + t]])
        return np.maximum(m, 0.0)

    def kl(self, t):
        m = self._coupling(t)
        return max(float((xlogy(m, m) - m * self.log_ref).sum()), 0.0)

    def dist(self, t):
        return float((self._coupling(t) * self.d).sum())

    def locate_slope(self, s: float) -> float:
        if self.hi <= self.lo:
            return self.lo
        log_k = self.c_ref - s * self.c_d
        if log_k > 700:
            return self.hi
        if log_k < -700:
            return self.lo
        k = math.exp(log_k)
        p0, p1 = self.p
        q0 = self.q[0]
        # t (p1 - q0 + t) = k (p0 - t)(q0 - t)
        a = 1.0 - k
        b = p1 - q0 + k * (p0 + q0)
        c = k * p0 * q0
        disc = math.sqrt(max(b * b + 4.0 * a * c, 0.0))
        if b >= 0:
            t = 2.0 * c / (b + disc) if b + disc > 0 else self.lo
        else:
            t = (disc - b) / (2.0 * a)
        return min(max(t, self.lo), self.hi)

    def _solve_d(self, delta, side):
        t = self.lo + (delta - self.dist(self.lo)) / self.c_d
        return min(max(t, self.lo), self.hi)

    def _solve_kl(self, r, side):
        end = self.loc_min if side < 0 else self.loc_max
        f = lambda t: self.kl(t) - r
        if f(end) <= 0:
            return end
        return brentq(f, self.loc0, end, xtol=1e-15, rtol=4 * np.finfo(float).eps)


class EntropicFrontier(Frontier):
    """General supports: Newton on the dual potentials, slopes as locations."""

    def __init__(self, p, q, log_ref, d):
        super().__init__(p, q, log_ref, d)
        self._cache: dict[float, np.ndarray] = {}
        self._keys: list[float] = []
        self.d_min, self._u_min, self._v_min = _transport(self.p, self.q, self.d)
        neg, self._u_max, self._v_max = _transport(self.p, self.q, -self.d)
        self.d_max = -neg
        self.loc0 = 0.0
        self.loc_min = S_LIMIT
        self.loc_max = -S_LIMIT
        self._points: dict[float, tuple[float, float, np.ndarray]] = {}
        self.kl0, self.d0 = self._point(0.0)[:2]
        self.d_min = min(self.d_min, self.d0)
        self.d_max = max(self.d_max, self.d0)

    # dual machinery --------------------------------------------------------
    # Column potentials are eliminated in closed form, leaving the concave
    # function phi(a) = p.a - sum_j q_j lse_i(L_ij + a_i) of the row potentials.
    def _logits(self, s):
        return self.log_ref - s * self.d

    def _phi(self, a, L):
        return float(self.p @ a - self.q @ _lse_cols(L + a[:, None]))

    def _starts(self, s):
        starts = [np.zeros(self.p.size)]
        if self._keys:
            i = bisect_left(self._keys, s)
            for j in (i - 1, i):
                if 0 <= j < len(self._keys):
                    sc = self._keys[j]
                    starts.append(self._cache[sc])
                    if sc != 0 and np.sign(sc) == np.sign(s):
                        starts.append(self._cache[sc] * (s / sc))
        if abs(s) >= _LP_START:
            starts.append(abs(s) * (self._u_min if s > 0 else self._u_max))
        return [a - a[-1] for a in starts]

    def _residual(self, a, L):
        return float(np.abs(self.p - _softmax_cols(L + a[:, None]) @ self.q).max())

    def _newton(self, s):
        L = self._logits(s)
        a = max(self._starts(s), key=lambda a: self._phi(a, L))
        val = self._phi(a, L)
        record, stalled, gmax = math.inf, 0, math.inf
        for _ in range(_NEWTON_MAXITER):
            pi = _softmax_cols(L + a[:, None])
            r = pi @ self.q
            gmax = float(np.abs(self.p - r).max())
            if gmax < 1e-15:
                break
            # rounding floor: no progress on the residual for several steps
            if gmax < 0.5 * record:
                record, stalled = gmax, 0
            else:
                stalled += 1
                if stalled >= 4 and gmax < 1e-11:
                    break
            g = (self.p - r)[:-1]
            h = (np.diag(r) - (pi * self.q) @ pi.T)[:-1, :-1]
            h += 1e-15 * np.eye(g.size)
            try:
                step = np.linalg.solve(h, g)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(h, g, rcond=None)[0]
            step = np.append(step, 0.0)
            # saturated softmax makes the Hessian tiny and the raw step huge
            big = float(np.abs(step).max())
            if big > _MAX_STEP:
                step *= _MAX_STEP / big
            gd = float(g @ step[:-1])
            t = 1.0
            while t >= 1e-12:
                new = self._phi(a + t * step, L)
                if new >= val + 1e-4 * t * gd:
                    break
                # phi is flat to rounding (large |s|): judge by the residual instead
                if abs(new - val) <= 1e-12 * (1 + abs(val)) and self._residual(a + t * step, L) < gmax:
                    break
                t *= 0.5
            if t < 1e-12:
                break
            a, val = a + t * step, new
        if gmax > _RESIDUAL_WARN:
            warnings.warn(f"dual Newton stopped at residual {gmax:.2e} (slope {s:g})", ConvergenceWarning, stacklevel=3)
        return a

    def _point(self, s):
        hit = self._points.get(s)
        if hit is not None:
            return hit
        a = self._newton(s)
        lp = self._logits(s) + a[:, None]
        log_q = np.log(self.q) + lp - _lse_cols(lp)
        qm = np.exp(log_q)
        kl = max(float((qm * (log_q - self.log_ref)).sum()), 0.0)
        hit = (kl, float((qm * self.d).sum()), qm)
        self._points[s] = hit
        self._cache[s] = a
        self._keys.insert(bisect_left(self._keys, s), s)
        return hit

    def kl(self, s):
        return self._point(s)[0]

    def dist(self, s):
        if s == S_LIMIT:
            return self.d_min
        if s == -S_LIMIT:
            return self.d_max
        return self._point(s)[1]

    def _coupling(self, s):
        return self._point(s)[2]

    def locate_slope(self, s):
        return float(min(max(s, -S_LIMIT), S_LIMIT))

    def _root_in_log_slope(self, f, side):
        """Find the slope toward ``side`` where f crosses zero; f grows with |s|."""
        sign = -float(side)
        g = lambda u: f(sign * math.exp(u))
        hi = 0.0
        if g(hi) < 0:
            lo = hi
            while g(hi) < 0:
                lo, hi = hi, hi + 2.5
                if math.exp(hi) >= S_LIMIT:
                    return sign * S_LIMIT
        else:
            lo = hi - 2.5
            while g(lo) >= 0:
                hi, lo = lo, lo - 2.5
                if lo < -40:
                    return sign * math.exp(hi)
        u = brentq(g, lo, hi, xtol=1e-13, rtol=1e-13)
        return sign * math.exp(u)

    def _solve_d(self, delta, side):
        return self._root_in_log_slope(lambda s: side * (self.dist(s) - delta), side)

    def _solve_kl(self, r, side):
        return self._root_in_log_slope(lambda s: self.kl(s) - r, side)


def make_frontier(p, q, log_ref, d, method: str = "auto") -> Frontier:
    """Pick the solver from the support sizes of the marginals.

    ``method`` is ``"auto"``, ``"segment"`` or ``"entropic"``.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    na = int((p > 0).sum())
    nb = int((q > 0).sum())
    if na == 1 or nb == 1:
        return FixedFrontier(p, q, log_ref, d)
    if method == "segment" or (method == "auto" and na == 2 and nb == 2):
        if na != 2 or nb != 2:
            raise ValueError("segment solver needs two-letter supports")
        return SegmentFrontier(p, q, log_ref, d)
    if method not in ("auto", "entropic"):
        raise ValueError(f"unknown frontier method {method!r}")
    return EntropicFrontier(p, q, log_ref, d)
