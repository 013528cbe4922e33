"""Acceptance criteria, one printed PASS/FAIL line each, tolerances pinned here."""
import itertools
import math
import time

import numpy as np
import pytest

from slotsync import DetectorParams, ExponentProblem, validate_dmc
from slotsync.channel import EnsembleConfig, make_rng, sample_codebook
from slotsync.cli import RunConfig, cmd_compare, cmd_simulate
from slotsync.detector import dominance_check
from slotsync.exponents import compute_exponents, exponent_E2, no_rate_loss_bound, rate_vs_distortion
from slotsync.oracles import DoubleGrid, all_exponents
from slotsync.probability import TypeDescriptor
from slotsync.validation import estimate_probabilities, exact_full_oracle, inclusion_check

from conftest import CH1_ROWS

U = np.array([0.5, 0.5])

DOMINANCE_SECONDS = 120
INCLUSION_SECONDS = 60
ORACLE_TOL = 5e-3
ORACLE_SECONDS = 600
IDENTITY_TOL = 1e-6
E2_ZERO = 1e-6
E2_RATE_TOL = 1e-3
SLOPE_TOL = {"FA": 0.10, "MD": 0.10, "DE": 0.15}
SLOPE_SECONDS = 600
MC_SIGMAS = 3.0
MONOTONE_SLACK = 1e-9
SHIFT_TOL = 5e-3

NAMES = ("E_A", "E_B", "E_MD", "E_1", "E_2")


def test_1_dominance(ch1, report):
    rng = make_rng(2024)
    t0 = time.perf_counter()
    instances = violations = 0
    for n in (2, 3, 4):
        counts = TypeDescriptor.from_distribution(U, n)
        for M in (1, 2, 3):
            ens = EnsembleConfig(ch1, counts, n, M)
            for _ in range(20):
                cb = sample_codebook(ens, rng)
                p = DetectorParams(*rng.uniform(-0.5, 0.5, size=2))
                for _ in range(100):
                    labels = rng.integers(0, M + 1, size=2**n)
                    instances += 1
                    violations += not dominance_check(cb, ch1, p, labels).lemma_holds
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < DOMINANCE_SECONDS
    assert report(1, ok, f"{instances} instances, {violations} violations, {elapsed:.1f}s")


def test_2_inclusions(ch1, report):
    rng = make_rng(7)
    grid = [-1.0, -0.5, 0.0, 0.5, 1.0]
    t0 = time.perf_counter()
    v_max = v_np = checked = 0
    for n in range(1, 11):
        cb = sample_codebook(EnsembleConfig(ch1, TypeDescriptor.from_distribution(U, n), n, 3), rng)
        for a, b in itertools.product(grid, grid):
            rep = inclusion_check(cb, ch1, DetectorParams(a, b))
            v_max += rep.max_violations
            if rep.np_violations is not None:
                v_np += rep.np_violations
                checked += 1
    elapsed = time.perf_counter() - t0
    ok = v_max == v_np == 0 and checked == 10 * 15 and elapsed < INCLUSION_SECONDS
    assert report(2, ok, f"max-form violations {v_max}, sum-form violations {v_np} ({checked} cases), {elapsed:.1f}s")


CONFIGS = [(r, a, b) for r in (0.05, 0.1) for a in (-0.5, 0.0, 0.5) for b in (-0.5, 0.0, 0.5)]


@pytest.fixture(scope="module")
def engine_values(ch1):
    t0 = time.perf_counter()
    vals = {c: compute_exponents(ExponentProblem(ch1, U, *c)).values() for c in CONFIGS}
    return vals, time.perf_counter() - t0


def _gaps(engine, grid):
    worst, bad = 0.0, []
    for c in CONFIGS:
        ref = all_exponents(grid, *c)
        for name in NAMES:
            got, want = engine[c][name], ref[name]
            if math.isinf(got) and math.isinf(want):
                continue
            gap = abs(got - want)
            worst = max(worst, gap)
            if gap > ORACLE_TOL:
                bad.append((c, name, got, want))
    return worst, bad


def test_3_engine_vs_oracle(engine_values, report):
    engine, elapsed = engine_values
    # outer grid 1/2000 on Q_Y, inner grid 1/200 on the couplings
    worst, bad = _gaps(engine, DoubleGrid(CH1_ROWS, 0, U, 2000, 200))
    ok = not bad and elapsed < ORACLE_SECONDS
    assert report(3, ok, f"{len(CONFIGS) * len(NAMES)} values, max gap {worst:.2e} nats, engine {elapsed:.1f}s; {bad[:3]}")


def test_3b_coarse_oracle_is_upper_bound(engine_values, report):
    # a 1/200 outer grid only restricts the search, so it may sit above the engine but not below
    engine, _ = engine_values
    grid = DoubleGrid(CH1_ROWS, 0, U, 200, 200)
    below = []
    for c in CONFIGS:
        ref = all_exponents(grid, *c)
        for name in NAMES:
            if math.isfinite(ref[name]) and ref[name] < engine[c][name] - ORACLE_TOL:
                below.append((c, name))
    assert report("3b", not below, f"1/200 x 1/200 grid never below engine by more than {ORACLE_TOL}; {below[:3]}")


def _random_channel(seed):
    rng = make_rng(seed)
    rows = rng.uniform(0.05, 0.95, size=(3, 1))
    return np.hstack([rows, 1 - rows]).tolist()


@pytest.mark.parametrize("rows", [CH1_ROWS, _random_channel(1), _random_channel(2)], ids=["CH1", "rand1", "rand2"])
def test_4_no_rate_loss_identity(rows, report):
    dmc = validate_dmc(rows, 0)
    p = make_rng(len(str(rows))).dirichlet([2, 2]) if rows is not CH1_ROWS else U
    prob = ExponentProblem(dmc, p, 0.1, 0.0, 0.0)
    bound = no_rate_loss_bound(prob)
    pw_y = np.asarray(p) @ dmc.active_matrix()
    got = rate_vs_distortion(bound.d_pw, pw_y, prob)
    gap = abs(got - bound.i_pw)
    assert report(4, gap <= IDENTITY_TOL, f"W={np.round(rows, 4).tolist()} I={bound.i_pw:.7f} gap {gap:.1e}")


def _bisect(pred, lo, hi, iters=60):
    """Smallest r in [lo, hi] with pred(r), for a predicate monotone in r."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


@pytest.mark.parametrize("delta", [-1.2, 0.0])
def test_5_e2_vanishing_rate(ch1, delta, report):
    prob = ExponentProblem(ch1, U, 0.1, 0.0, -delta)
    target = rate_vs_distortion(delta, U, prob)
    e2 = lambda r: exponent_E2(prob.with_params(rate=r)).value
    found = _bisect(lambda r: e2(r) <= E2_ZERO, 0.0, math.log(2), iters=30)
    ok = abs(found - target) <= E2_RATE_TOL
    assert report(5, ok, f"alpha-beta={delta}: E2<=1e-6 from R={found:.5f}, target {target:.5f}, gap {abs(found - target):.1e}")


@pytest.mark.parametrize("delta", [-1.2, 0.0])
def test_5b_e2_exact_zero_rate(ch1, delta, report):
    # E2 vanishes quadratically at the target, so the 1e-6 level is crossed early; zero itself is not
    prob = ExponentProblem(ch1, U, 0.1, 0.0, -delta)
    target = rate_vs_distortion(delta, U, prob)
    found = _bisect(lambda r: exponent_E2(prob.with_params(rate=r)).value == 0.0, 0.0, math.log(2), iters=30)
    ok = abs(found - target) <= E2_RATE_TOL
    assert report("5b", ok, f"alpha-beta={delta}: E2=0 from R={found:.5f}, target {target:.5f}")


def test_6_slope_convergence(report):
    cfg = RunConfig.from_dict({
        "channel": {"W": CH1_ROWS, "silent_index": 0},
        "P": [0.5, 0.5], "M": 2, "n": list(range(6, 19, 2)), "alpha": 0.0, "beta": 0.3,
        "method": "exact-y", "codebooks": 200, "seed": 6, "tolerance": SLOPE_TOL,
    })
    t0 = time.perf_counter()
    _, sims = cmd_simulate(cfg)
    status, rows = cmd_compare(cfg, sims)
    elapsed = time.perf_counter() - t0
    parts = [f"{r['kind']} slope {r['slope']:.3f} vs {r['predicted']:.3f}" for r in rows]
    ok = all(r["within"] for r in rows) and elapsed < SLOPE_SECONDS
    assert report(6, ok, "; ".join(parts) + f", {elapsed:.1f}s")


def test_7_monte_carlo_vs_exact(ch1, report):
    cfg = EnsembleConfig(ch1, TypeDescriptor((2, 2)), 4, 2, seed=0)
    p = DetectorParams(0.0, 0.0)
    exact = exact_full_oracle(cfg, p)
    mc = estimate_probabilities(cfg, p, 100_000, make_rng(77))
    z = {k: abs(getattr(mc, "p_" + k) - getattr(exact, "p_" + k)) / getattr(mc, "se_" + k) for k in ("fa", "md", "de")}
    ok = all(v <= MC_SIGMAS for v in z.values())
    assert report(7, ok, ", ".join(f"{k} z={v:.2f}" for k, v in z.items()))


BETAS = np.linspace(-0.8, 0.8, 9)


@pytest.mark.parametrize("alpha", [-0.3, 0.0, 0.3])
def test_8_monotone_in_beta(ch1, alpha, report):
    reps = [compute_exponents(ExponentProblem(ch1, U, 0.1, alpha, float(b))).values() for b in BETAS]
    fa = [r["E_FA"] for r in reps]
    md = [r["E_MD"] for r in reps]
    up = all(y >= x - MONOTONE_SLACK for x, y in zip(fa, fa[1:]))
    down = all(y <= x + MONOTONE_SLACK for x, y in zip(md, md[1:]))
    assert report(8, up and down, f"alpha={alpha}: E_FA nondecreasing {up}, E_MD nonincreasing {down}")


@pytest.mark.parametrize("alpha, beta", [(0.0, 0.0), (0.0, 0.5), (0.3, -0.2), (0.5, 0.5)])
def test_8b_shift_invariance(ch1, alpha, beta, report):
    a = compute_exponents(ExponentProblem(ch1, U, 0.1, alpha, beta)).values()
    b = compute_exponents(ExponentProblem(ch1, U, 0.1, alpha + 0.2, beta + 0.2)).values()
    gaps = {k: (0.0 if a[k] == b[k] else abs(a[k] - b[k])) for k in a}
    # E_B is a function of beta alone; only its minimum with E_A enters E_FA
    worst = max(gaps[k] for k in ("E_FA", "E_MD", "E_DE"))
    assert report(
        "8b", worst <= SHIFT_TOL,
        f"({alpha},{beta}) vs shifted: max gap over E_FA/E_MD/E_DE {worst:.1e} (auxiliary E_B moves {gaps['E_B']:.3f})",
    )
