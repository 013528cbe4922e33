"""Random-coding exponents of the optimal slotted detector/decoder.

Notation (all in nats).  ``P`` is the codeword composition on the active
inputs, ``Q0`` the noise output distribution and

    d(x, y) = ln Q0(y) - ln W(y|x),   D(Q) = E_Q d(X, Y).

For an output distribution ``Q_Y`` the joints with marginals ``(P, Q_Y)``
carry two convex objectives: the mutual information ``I(Q)`` and the
conditional divergence ``D(Q_{Y|X} || W | P)``.  Both are traced against
``D(Q)`` by :mod:`slotsync.frontier`; this module assembles the frontiers
into

    R(Delta; Q_Y)   min I   subject to D <= Delta
    Dst(r; Q_Y)     min D   subject to I <= r
    mu(Q_Y, r)      min I + D subject to I <= r

and the exponents E_A, E_B, E_FA, E_MD, E_1, E_2, E_DE.  Outer infima over
``Q_Y`` use :func:`slotsync.search.minimize_on_simplex`.

Conventions: ``+inf`` is a plain float infinity, ``[x]_+`` maps ``inf`` to
``inf`` and an infimum over an empty set is ``inf``.
"""
from __future__ import annotations

import json
import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from . import __version__
from .channel import Dmc
from .frontier import Frontier, make_frontier
from .probability import Distribution, JointDistribution, kl_divergence, mutual_information
from .search import SearchSettings, minimize_on_simplex

_CACHE_SIZE = 20000


def pos(x: float) -> float:
    """[x]_+ with ``inf`` preserved."""
    return x if x > 0 else 0.0


@dataclass(frozen=True)
class ExponentProblem:
    """Channel, composition, rate and thresholds of one exponent evaluation.

    ``p`` is indexed like ``dmc.inputs``.  Channels with a zero transition
    probability are rejected because ``d`` would be infinite.
    """

    dmc: Dmc
    p: Distribution
    rate: float
    alpha: float
    beta: float
    frontier_method: str = "auto"

    def __post_init__(self):
        if not isinstance(self.p, Distribution):
            object.__setattr__(self, "p", Distribution(self.p))
        zeros = self.dmc.zero_entries()
        if zeros:
            x, y = zeros[0]
            raise ValueError(f"exponents need a full-support channel; W({y}|{x}) = 0")
        if len(self.p) != len(self.dmc.inputs):
            raise ValueError(f"composition has {len(self.p)} letters, channel has {len(self.dmc.inputs)} active inputs")
        for name in ("rate", "alpha", "beta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.rate < 0:
            raise ValueError("rate must be nonnegative")

    def with_params(self, **changes) -> "ExponentProblem":
        return replace(self, **changes)

    @property
    def delta(self) -> float:
        """alpha - beta."""
        return self.alpha - self.beta

    @property
    def delta_md(self) -> float:
        """[alpha]_+ - beta."""
        return pos(self.alpha) - self.beta

    @property
    def geometry(self) -> "Geometry":
        return geometry_for(self.dmc, self.p, self.frontier_method)

    def to_dict(self) -> dict:
        return {
            "channel": self.dmc.to_dict(),
            "P": self.p.probs.tolist(),
            "R": self.rate,
            "alpha": self.alpha,
            "beta": self.beta,
            "frontier_method": self.frontier_method,
        }


def distortion_matrix(dmc: Dmc) -> np.ndarray:
    """d(x, y) for the active inputs (rows) and all outputs."""
    return dmc.log_w[dmc.silent][None, :] - dmc.active_matrix_log()


def distortion_of(q, dmc: Dmc) -> float:
    """D(Q) = sum_{x,y} Q(x,y) ln[Q0(y)/W(y|x)] for a joint on active inputs x outputs."""
    q = np.asarray(q, dtype=float)
    d = distortion_matrix(dmc)
    if q.shape != d.shape:
        raise ValueError(f"joint has shape {q.shape}, expected {d.shape}")
    mask = q > 0
    return float((q[mask] * d[mask]).sum())


class Geometry:
    """Frontiers per output distribution for a fixed channel and composition.

    Nothing here depends on the rate or the thresholds, so one instance
    serves a whole sweep.
    """

    def __init__(self, dmc: Dmc, p: Distribution, method: str = "auto"):
        self.dmc = dmc
        self.p = np.asarray(p, dtype=float)
        self.method = method
        self.d = distortion_matrix(dmc)
        self.q0 = np.asarray(dmc.q0, dtype=float)
        self.log_pw = np.log(np.maximum(self.p, 1e-300))[:, None] + dmc.active_matrix_log()
        self.pw = self.p[:, None] * dmc.active_matrix()
        self._info: OrderedDict = OrderedDict()
        self._chan: OrderedDict = OrderedDict()

    @property
    def n_outputs(self) -> int:
        return self.d.shape[1]

    def _lookup(self, store: OrderedDict, q_y: np.ndarray, build):
        key = q_y.tobytes()
        hit = store.get(key)
        if hit is None:
            hit = build()
            store[key] = hit
            if len(store) > _CACHE_SIZE:
                store.popitem(last=False)
        return hit

    def info(self, q_y) -> Frontier:
        """Mutual-information frontier at ``q_y``."""
        q_y = _as_q(q_y)

        def build():
            with np.errstate(divide="ignore"):
                log_ref = np.log(self.p)[:, None] + np.log(q_y)[None, :]
            return make_frontier(self.p, q_y, log_ref, self.d, self.method)

        return self._lookup(self._info, q_y, build)

    def channel(self, q_y) -> Frontier:
        """Conditional-divergence frontier at ``q_y``."""
        q_y = _as_q(q_y)
        return self._lookup(self._chan, q_y, lambda: make_frontier(self.p, q_y, self.log_pw, self.d, self.method))

    def divergence_from_noise(self, q_y) -> float:
        return kl_divergence(_as_q(q_y), self.q0)

    def induced_output(self) -> np.ndarray:
        """(P x W)_Y."""
        return self.pw.sum(axis=0)


def _as_q(q_y) -> np.ndarray:
    q = np.asarray(q_y, dtype=float).ravel()
    q = np.maximum(q, 0.0)
    return q / q.sum()


_GEOMETRIES: OrderedDict = OrderedDict()


def geometry_for(dmc: Dmc, p, method: str = "auto") -> Geometry:
    p = np.asarray(p, dtype=float)
    key = (dmc.w.tobytes(), dmc.w.shape, dmc.silent, p.tobytes(), method)
    geo = _GEOMETRIES.get(key)
    if geo is None:
        geo = Geometry(dmc, Distribution(p), method)
        _GEOMETRIES[key] = geo
        if len(_GEOMETRIES) > 16:
            _GEOMETRIES.popitem(last=False)
    return geo


# single-Q_Y quantities --------------------------------------------------------

@dataclass(frozen=True)
class RateCurvePoint:
    delta: float
    rate: float


def rate_vs_distortion(delta: float, q_y, prob: ExponentProblem) -> float:
    """min I(Q) over joints with marginals (P, q_y) and D(Q) <= delta; inf if none."""
    return prob.geometry.info(q_y).min_kl_below(delta)


def rate_curve(q_y, prob: ExponentProblem, deltas) -> list[RateCurvePoint]:
    f = prob.geometry.info(q_y)
    return [RateCurvePoint(float(t), f.min_kl_below(float(t))) for t in deltas]


def distortion_vs_rate(r: float, q_y, prob: ExponentProblem) -> float:
    """min D(Q) over joints with marginals (P, q_y) and I(Q) <= r."""
    if r < 0:
        raise ValueError("rate must be nonnegative")
    return prob.geometry.info(q_y).min_d_within(r)


def r1_d1(q_y, prob: ExponentProblem) -> tuple[float, float]:
    """I and D at the minimizer of I + D (unique: the objective is strictly convex)."""
    f = prob.geometry.info(q_y)
    loc = f.locate_slope(1.0)
    return f.kl(loc), f.dist(loc)


def mu_of(q_y, r: float, prob: ExponentProblem) -> float:
    """min I + D subject to I <= r, marginals fixed."""
    if r < 0:
        raise ValueError("rate must be nonnegative")
    r1, d1 = r1_d1(q_y, prob)
    if r >= r1:
        return r1 + d1
    # below R1 the constraint binds and the best D at I = r is Dst(r)
    return r + distortion_vs_rate(r, q_y, prob)


def r_tilde(delta: float, r: float, q_y, prob: ExponentProblem) -> float:
    """R(delta) - r when delta <= mu(q_y, r) - r, else 0."""
    if delta > mu_of(q_y, r, prob) - r:
        return 0.0
    return pos(rate_vs_distortion(delta, q_y, prob) - r)


def md_threshold_rate(q_y, prob: ExponentProblem) -> float:
    """Rate above which misdetection of an output type becomes double-exponentially rare."""
    dp = prob.delta_md
    rd = rate_vs_distortion(dp, q_y, prob)
    r1, d1 = r1_d1(q_y, prob)
    other = r1 + d1 + prob.beta - prob.alpha if dp < d1 else rd + pos(-prob.alpha)
    return min(rd, other)


def enumerator_exponent_value(i: float, u: float, r: float) -> float:
    """Three-case exponent from mutual information ``i`` and offset ``u``."""
    if u <= 0:
        return pos(i - r)
    return math.inf if u > r - i else 0.0


def enumerator_exponent(q, r: float, prob: ExponentProblem) -> float:
    """Exponent of the event that some of e^{nr} random codewords have joint type ``q`` with y.

    ``u = D(q) + beta - alpha``; ``[I - r]_+`` when ``u <= 0``, ``inf`` when
    ``u > r - I`` and 0 otherwise (the boundary ``u = r - I`` gives 0).
    """
    q = np.asarray(q, dtype=float)
    return enumerator_exponent_value(mutual_information(q), distortion_of(q, prob.dmc) + prob.beta - prob.alpha, r)


class RateLossBound(NamedTuple):
    d_pw: float
    i_pw: float
    holds: bool


def no_rate_loss_bound(prob: ExponentProblem) -> RateLossBound:
    """D(P x W), I(P x W) and whether alpha - beta <= D(P x W)."""
    geo = prob.geometry
    d_pw = distortion_of(geo.pw, prob.dmc)
    i_pw = mutual_information(geo.pw)
    return RateLossBound(d_pw, i_pw, prob.delta <= d_pw)


# outer problems ---------------------------------------------------------------

@dataclass
class Minimum:
    """Value of an outer problem with where it is attained."""

    value: float
    q_y: np.ndarray | None = None
    q_y_given_x: np.ndarray | None = None
    feasible: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"value": _json_real(self.value)}
        if self.q_y is not None:
            out["Q_Y"] = self.q_y.tolist()
        if self.q_y_given_x is not None:
            out["Q_Y|X"] = self.q_y_given_x.tolist()
        if self.feasible:
            out["feasible"] = dict(self.feasible)
        return out


def _search(prob, f, settings):
    return minimize_on_simplex(f, prob.geometry.n_outputs, settings)


def _conditional(geo: Geometry, joint: np.ndarray) -> np.ndarray:
    return joint / geo.p[:, None]


def _rate_penalized(prob, delta, settings) -> Minimum:
    """inf_{Q_Y} D(Q_Y||Q0) + [R(delta; Q_Y) - R]_+."""
    geo = prob.geometry
    R = prob.rate

    def f(q):
        kl = geo.divergence_from_noise(q)
        if not math.isfinite(kl):
            return math.inf
        return kl + pos(geo.info(q).min_kl_below(delta) - R)

    val, q = _search(prob, f, settings)
    return Minimum(val, q)


def exponent_EB(prob: ExponentProblem, settings: SearchSettings | None = None) -> Minimum:
    return _rate_penalized(prob, -prob.beta, settings)


def exponent_EA(prob: ExponentProblem, settings: SearchSettings | None = None) -> Minimum:
    """inf_{Q_Y} D(Q_Y||Q0) + R~(alpha - beta, R; Q_Y).

    Split by the branch of R~: on ``{mu - R < Delta}`` only the divergence
    remains, and elsewhere R~ = [R(Delta) - R]_+.  Since the second term is
    nonnegative, the infimum is the smaller of the penalized problem over all
    ``Q_Y`` and the divergence over the branch set.
    """
    geo = prob.geometry
    R, delta = prob.rate, prob.delta
    first = _rate_penalized(prob, delta, settings)

    def g(q):
        kl = geo.divergence_from_noise(q)
        if not math.isfinite(kl) or mu_of(q, R, prob) - R > delta:
            return math.inf
        return kl

    val, q = _search(prob, g, settings)
    if val < first.value:
        return Minimum(val, q)
    return first


def exponent_EFA(prob: ExponentProblem, settings: SearchSettings | None = None) -> Minimum:
    a = exponent_EA(prob, settings)
    b = exponent_EB(prob, settings)
    return a if a.value <= b.value else b


def md_constraints(q_y, prob: ExponentProblem) -> tuple[bool, bool, bool]:
    """Output-distribution constraints of E_MD at ``q_y``.

    1. Dst(R; Q_Y) >= [alpha]_+ - beta
    2. D1 <= [alpha]_+ - beta  implies  R([alpha]_+ - beta; Q_Y) >= R - [-alpha]_+
    3. D1 >  [alpha]_+ - beta  implies  R1 + D1 >= R + alpha - beta

    The joint-level condition D(P x Q_{Y|X}) >= [alpha]_+ - beta is applied
    by :func:`exponent_EMD`.
    """
    geo = prob.geometry
    dp, R = prob.delta_md, prob.rate
    f = geo.info(q_y)
    c1 = f.min_d_within(R) >= dp
    r1, d1 = r1_d1(q_y, prob)
    if d1 <= dp:
        c2 = f.min_kl_below(dp) >= R - pos(-prob.alpha)
        c3 = True
    else:
        c2 = True
        c3 = r1 + d1 >= R + prob.delta
    return c1, c2, c3


def exponent_EMD(prob: ExponentProblem, settings: SearchSettings | None = None) -> Minimum:
    """inf D(Q_{Y|X}||W|P) over conditionals meeting the misdetection constraints."""
    geo = prob.geometry
    dp = prob.delta_md
    seen = [False, False, False, False]

    def f(q):
        flags = md_constraints(q, prob)
        for i, ok in enumerate(flags):
            seen[i] = seen[i] or ok
        if not all(flags):
            return math.inf
        val = geo.channel(q).min_kl_above(dp)
        seen[3] = seen[3] or math.isfinite(val)
        return val

    val, q = _search(prob, f, settings)
    feasible = {"constraint1": seen[0], "constraint2": seen[1], "constraint3": seen[2], "all": math.isfinite(val)}
    if q is None:
        return Minimum(math.inf, feasible=feasible)
    fr = geo.channel(q)
    joint = fr.coupling(fr.locate_above(dp))
    return Minimum(val, q, _conditional(geo, joint), feasible)


def _e1_inner(geo: Geometry, q, cap: float, R: float) -> tuple[float, float | None]:
    """min over delta <= cap of K_W(delta) + [R(delta) - R]_+ at fixed Q_Y."""
    fw, fi = geo.channel(q), geo.info(q)
    lo, hi = max(fw.d_min, fi.d_min), min(cap, fw.d_max)
    if hi < lo - fw.tol:
        return math.inf, None
    hi = max(hi, lo)

    def h(t):
        return fw.min_kl_at(t) + pos(fi.min_kl_below(t) - R)

    if hi - lo <= 1e-13:
        return h(lo), lo
    # the objective is convex in delta
    res = minimize_scalar(h, bounds=(lo, hi), method="bounded", options={"xatol": 1e-11})
    cands = [(float(res.fun), float(res.x)), (h(lo), lo), (h(hi), hi)]
    return min(cands)


def exponent_E1(prob: ExponentProblem, settings: SearchSettings | None = None) -> Minimum:
    """inf over D(P x Q_{Y|X}) <= [alpha]_+ - beta of D(Q_{Y|X}||W|P) + [R(D; Q_Y) - R]_+."""
    geo = prob.geometry
    cap, R = prob.delta_md, prob.rate
    val, q = _search(prob, lambda q: _e1_inner(geo, q, cap, R)[0], settings)
    if q is None:
        return Minimum(math.inf, feasible={"cap": False})
    t = _e1_inner(geo, q, cap, R)[1]
    fr = geo.channel(q)
    return Minimum(val, q, _conditional(geo, fr.coupling(fr.locate_at(t))), {"cap": True})


def exponent_E2(prob: ExponentProblem, settings: SearchSettings | None = None) -> Minimum:
    """inf over Q_{Y|X} of D(Q_{Y|X}||W|P) + [R(alpha - beta; Q_Y) - R]_+."""
    geo = prob.geometry
    delta, R = prob.delta, prob.rate

    def f(q):
        fw = geo.channel(q)
        return fw.kl0 + pos(geo.info(q).min_kl_below(delta) - R)

    val, q = _search(prob, f, settings)
    fr = geo.channel(q)
    return Minimum(val, q, _conditional(geo, fr.coupling(fr.loc0)))


def exponent_EDE(prob: ExponentProblem, settings: SearchSettings | None = None) -> Minimum:
    parts = [exponent_E1(prob, settings), exponent_E2(prob, settings), exponent_EMD(prob, settings)]
    return min(parts, key=lambda m: m.value)


# report -----------------------------------------------------------------------

def _json_real(x: float):
    return "inf" if x == math.inf else float(x)


@dataclass
class ExponentReport:
    problem: ExponentProblem
    settings: SearchSettings
    e_a: Minimum
    e_b: Minimum
    e_md: Minimum
    e_1: Minimum
    e_2: Minimum

    @property
    def e_fa(self) -> float:
        return min(self.e_a.value, self.e_b.value)

    @property
    def e_de(self) -> float:
        return min(self.e_1.value, self.e_2.value, self.e_md.value)

    def values(self) -> dict[str, float]:
        return {
            "E_A": self.e_a.value,
            "E_B": self.e_b.value,
            "E_FA": self.e_fa,
            "E_MD": self.e_md.value,
            "E_1": self.e_1.value,
            "E_2": self.e_2.value,
            "E_DE": self.e_de,
        }

    def to_dict(self) -> dict:
        bound = no_rate_loss_bound(self.problem)
        return {
            "version": __version__,
            "inputs": self.problem.to_dict(),
            "search": self.settings.to_dict(),
            "exponents": {k: _json_real(v) for k, v in self.values().items()},
            "minimizers": {
                "E_A": self.e_a.to_dict(),
                "E_B": self.e_b.to_dict(),
                "E_MD": self.e_md.to_dict(),
                "E_1": self.e_1.to_dict(),
                "E_2": self.e_2.to_dict(),
            },
            "no_rate_loss": {"D_PW": bound.d_pw, "I_PW": bound.i_pw, "holds": bound.holds},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def compute_exponents(prob: ExponentProblem, settings: SearchSettings | None = None) -> ExponentReport:
    settings = settings or SearchSettings()
    return ExponentReport(
        prob,
        settings,
        exponent_EA(prob, settings),
        exponent_EB(prob, settings),
        exponent_EMD(prob, settings),
        exponent_E1(prob, settings),
        exponent_E2(prob, settings),
    )
