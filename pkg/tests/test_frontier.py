import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize
from scipy.special import xlogy

from slotsync.frontier import ConvergenceWarning, make_frontier, transport_bounds


def kl_to(q, log_ref):
    return float((xlogy(q, q) - q * log_ref).sum())


def slsqp_min_kl(p, q, log_ref, d, delta, sense=-1):
    """min KL(Q || ref) over couplings with D(Q) <= delta (sense -1) or >= delta (+1)."""
    a, b = d.shape
    cons = [
        {"type": "eq", "fun": lambda v: v.reshape(a, b).sum(axis=1) - p},
        {"type": "eq", "fun": lambda v: v.reshape(a, b).sum(axis=0)[:-1] - q[:-1]},
        {"type": "ineq", "fun": lambda v: sense * ((v.reshape(a, b) * d).sum() - delta)},
    ]
    best = math.inf
    for start in (np.outer(p, q), np.full((a, b), 1.0 / (a * b))):
        res = minimize(
            lambda v: kl_to(np.maximum(v.reshape(a, b), 1e-300), log_ref),
            start.ravel(),
            method="SLSQP",
            bounds=[(1e-15, 1)] * (a * b),
            constraints=cons,
            options={"ftol": 1e-13, "maxiter": 500},
        )
        feasible = all(np.all(np.abs(c["fun"](res.x)) < 1e-8) if c["type"] == "eq" else c["fun"](res.x) > -1e-8 for c in cons)
        if res.success and feasible:
            best = min(best, res.fun)
    return best


def problem(rng, a, b, kind):
    p = rng.dirichlet(np.ones(a))
    q = rng.dirichlet(np.ones(b))
    d = rng.normal(size=(a, b))
    if kind == "info":
        log_ref = np.log(p)[:, None] + np.log(q)[None, :]
    else:
        w = rng.dirichlet(np.ones(b), size=a)
        log_ref = np.log(p)[:, None] + np.log(w)
    return p, q, log_ref, d


def test_transport_ch1(ch1):
    d = np.log(ch1.w[0])[None, :] - np.log(ch1.active_matrix())
    lo, hi = transport_bounds(np.array([0.5, 0.5]), np.array([0.5, 0.5]), d)
    assert lo == pytest.approx(0.5 * (d[1, 1] + d[0, 0]), abs=1e-12)
    assert lo == pytest.approx(-1.3003692, abs=1e-6)
    assert hi == pytest.approx(0.5 * (d[0, 1] + d[1, 0]), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(["info", "channel"]), st.floats(0.05, 0.95))
def test_segment_matches_entropic(seed, kind, frac):
    rng = np.random.default_rng(seed)
    p, q, log_ref, d = problem(rng, 2, 2, kind)
    seg = make_frontier(p, q, log_ref, d, "segment")
    ent = make_frontier(p, q, log_ref, d, "entropic")
    assert seg.d_min == pytest.approx(ent.d_min, abs=1e-9)
    assert seg.d_max == pytest.approx(ent.d_max, abs=1e-9)
    for delta in (seg.d_min + frac * (seg.d0 - seg.d_min), seg.d0 + frac * (seg.d_max - seg.d0)):
        assert seg.min_kl_at(delta) == pytest.approx(ent.min_kl_at(delta), abs=1e-8)
    r = frac * seg.kl(seg.loc_min)
    assert seg.min_d_within(r) == pytest.approx(ent.min_d_within(r), abs=1e-7)


@pytest.mark.filterwarnings("ignore:Values in x were outside bounds")
@pytest.mark.parametrize("shape", [(3, 2), (2, 3), (3, 3)])
@pytest.mark.parametrize("kind", ["info", "channel"])
@pytest.mark.parametrize("seed", range(3))
def test_entropic_against_slsqp(shape, kind, seed):
    rng = np.random.default_rng(100 * seed + shape[0] * 10 + shape[1])
    p, q, log_ref, d = problem(rng, *shape, kind)
    fr = make_frontier(p, q, log_ref, d)
    for frac in (0.3, 0.7):
        below = fr.d_min + frac * (fr.d0 - fr.d_min)
        assert fr.min_kl_below(below) == pytest.approx(slsqp_min_kl(p, q, log_ref, d, below, -1), abs=2e-5)
        above = fr.d0 + frac * (fr.d_max - fr.d0)
        assert fr.min_kl_above(above) == pytest.approx(slsqp_min_kl(p, q, log_ref, d, above, +1), abs=2e-5)


@pytest.mark.parametrize("method", ["segment", "entropic"])
def test_frontier_shape(method):
    rng = np.random.default_rng(7)
    p, q, log_ref, d = problem(rng, 2, 2, "info")
    fr = make_frontier(p, q, log_ref, d, method)
    ts = np.linspace(fr.d_min, fr.d_max, 41)
    ks = np.array([fr.min_kl_at(t) for t in ts])
    assert ks.min() >= -1e-12
    # convex in D
    assert np.all(ks[:-2] + ks[2:] - 2 * ks[1:-1] >= -1e-8)
    loc = fr.locate_at(ts[10])
    c = fr.coupling(loc)
    np.testing.assert_allclose(c.sum(axis=1), p, atol=1e-10)
    np.testing.assert_allclose(c.sum(axis=0), q, atol=1e-10)
    assert (c * d).sum() == pytest.approx(ts[10], abs=1e-9)


def test_infeasible_and_degenerate():
    p = np.array([0.5, 0.5])
    q = np.array([1.0, 0.0])
    d = np.array([[1.0, 2.0], [3.0, 4.0]])
    fr = make_frontier(p, q, np.zeros((2, 2)), d)
    # the only coupling puts p on the first column: D = 2
    assert fr.min_kl_below(2.1) == pytest.approx(fr.kl0)
    assert fr.min_kl_below(1.9) == math.inf
    assert fr.min_kl_above(1.9) == pytest.approx(fr.kl0)
    full = make_frontier(p, np.array([0.5, 0.5]), np.log(0.25) * np.ones((2, 2)), d)
    assert full.min_kl_below(full.d_min - 1e-6) == math.inf


def test_no_warnings_on_ch1_sweep(ch1):
    d = np.log(ch1.w[0])[None, :] - np.log(ch1.active_matrix())
    p = np.array([0.5, 0.5])
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        for a in np.linspace(0.01, 0.99, 15):
            q = np.array([a, 1 - a])
            fr = make_frontier(p, q, np.log(p)[:, None] + np.log(q)[None, :], d, "entropic")
            for t in np.linspace(fr.d_min, fr.d_max, 9):
                fr.min_kl_at(t)
