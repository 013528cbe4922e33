"""Monte Carlo and exhaustive estimates of the ensemble error probabilities.

Three estimators share :class:`ErrorEstimates`:

``monte-carlo``
    fresh codebook and fresh output per trial;
``exact-y``
    sampled codebooks, exact sums over all outputs (small probabilities are
    computed rather than sampled);
``exact-full``
    every codebook of the type class ensemble and every output.

Monte Carlo draws the sent message uniformly.  ``condition_on_first=True``
always sends message 1 instead; that has less variance but is biased when
codewords can collide, because ties decode to the lowest index.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from .channel import Codebook, Dmc, EnsembleConfig, make_rng, sample_codebook
from .detector import (
    DEFAULT_BUDGET,
    DetectorParams,
    REJECT,
    Variant,
    _decide,
    _log_stats,
    _margins,
    check_budget,
    exact_log_error_probabilities,
    output_chunks,
)
from .probability import JointDistribution, log_type_class_size

FULL_ORACLE_BUDGET = 10_000_000


@dataclass(frozen=True)
class ErrorEstimates:
    p_fa: float
    p_md: float
    p_de: float
    se_fa: float
    se_md: float
    se_de: float
    trials: int
    method: str
    # natural logs of the estimates; finite even where the estimate underflows
    log_fa: float = field(default=math.nan)
    log_md: float = field(default=math.nan)
    log_de: float = field(default=math.nan)

    def __post_init__(self):
        for name in ("p_fa", "p_md", "p_de"):
            v = getattr(self, name)
            if not -1e-12 <= v <= 1 + 1e-12:
                raise ValueError(f"{name} = {v} outside [0, 1]")
        for name in ("log_fa", "log_md", "log_de"):
            if math.isnan(getattr(self, name)):
                p = getattr(self, "p_" + name[4:])
                object.__setattr__(self, name, math.log(p) if p > 0 else -math.inf)

    def to_dict(self) -> dict:
        return {k: (v if not isinstance(v, float) or math.isfinite(v) else str(v)) for k, v in asdict(self).items()}


# joint types -------------------------------------------------------------------

def count_joint_type(cb: Codebook, y, q: JointDistribution, x_alphabet=None, y_alphabet=None) -> int:
    """Number of codewords whose joint type with ``y`` equals ``q``.

    Row and column symbols come from ``q``'s labels, or from ``x_alphabet`` /
    ``y_alphabet`` (default columns ``0..ny-1``).  Comparison is on integer
    counts.
    """
    y = np.asarray(y, dtype=np.int64)
    n = y.size
    if n != cb.n:
        raise ValueError(f"output length {n} does not match block length {cb.n}")
    xa = q.x_labels if q.x_labels is not None else x_alphabet
    if xa is None:
        raise ValueError("input symbols of the joint type are unknown; pass x_alphabet")
    ya = q.y_labels if q.y_labels is not None else (y_alphabet if y_alphabet is not None else range(q.shape[1]))
    xa, ya = list(xa), list(ya)
    if q.counts is not None:
        if q.n != n:
            raise ValueError(f"joint type has denominator {q.n}, block length is {n}")
        target = np.asarray(q.counts)
    else:
        raw = np.asarray(q.probs) * n
        target = np.rint(raw).astype(np.int64)
        if np.abs(raw - target).max() > 1e-9:
            raise ValueError(f"joint distribution is not a type with denominator {n}")
    xi = {s: i for i, s in enumerate(xa)}
    yi = {s: j for j, s in enumerate(ya)}
    cols = np.array([yi.get(int(v), -1) for v in y])
    if np.any(cols < 0):
        return 0
    count = 0
    for word in cb.codewords:
        rows = np.array([xi.get(int(v), -1) for v in word])
        if np.any(rows < 0):
            continue
        c = np.zeros(q.shape, dtype=np.int64)
        np.add.at(c, (rows, cols), 1)
        count += bool(np.array_equal(c, target))
    return count


# Monte Carlo -------------------------------------------------------------------

def _batched_log_stats(log_w, silent, words, ys):
    """(B, M) codeword log-likelihoods and (B,) noise log-likelihoods."""
    ll = log_w[words, ys[:, None, :]].sum(axis=2)
    l0 = log_w[silent][ys].sum(axis=1)
    return ll, l0


def _sample_outputs(w_cum, inputs, rng):
    u = rng.random(inputs.shape)
    y = (u[..., None] >= w_cum[inputs]).sum(axis=-1)
    return np.minimum(y, w_cum.shape[1] - 1)


def _binomial_se(p, n):
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def estimate_probabilities(
    cfg: EnsembleConfig,
    p: DetectorParams,
    trials: int,
    rng: np.random.Generator | None = None,
    condition_on_first: bool = False,
    batch: int = 20_000,
) -> ErrorEstimates:
    """Plain Monte Carlo over codebooks and outputs."""
    if trials < 1:
        raise ValueError("need at least one trial")
    rng = make_rng(cfg.seed) if rng is None else rng
    dmc = cfg.dmc
    log_w = dmc.log_w
    w_cum = np.cumsum(dmc.w, axis=1)
    base = cfg.base_word()
    n, M = cfg.n, cfg.M
    fa = md = de = 0
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        words = rng.permuted(np.broadcast_to(base, (b, M, n)).copy(), axis=2)
        y0 = _sample_outputs(w_cum, np.full((b, n), dmc.silent), rng)
        ll, l0 = _batched_log_stats(log_w, dmc.silent, words, y0)
        fa += int(np.count_nonzero(_decide(ll, l0, n, p, Variant.OPTIMAL) != REJECT))
        sent = np.zeros(b, dtype=np.int64) if condition_on_first else rng.integers(0, M, size=b)
        y1 = _sample_outputs(w_cum, words[np.arange(b), sent], rng)
        ll, l0 = _batched_log_stats(log_w, dmc.silent, words, y1)
        dec = _decide(ll, l0, n, p, Variant.OPTIMAL)
        md += int(np.count_nonzero(dec == REJECT))
        de += int(np.count_nonzero(dec != sent + 1))
        done += b
    pf, pm, pd = fa / trials, md / trials, de / trials
    return ErrorEstimates(
        pf, pm, pd, _binomial_se(pf, trials), _binomial_se(pm, trials), _binomial_se(pd, trials), trials, "monte-carlo"
    )


# exact sums --------------------------------------------------------------------

def _summarize(logs: np.ndarray, method: str) -> ErrorEstimates:
    """Mean and standard error of per-codebook probabilities given as logs (K x 3)."""
    k = logs.shape[0]
    with np.errstate(divide="ignore"):
        mean_log = logsumexp(logs, axis=0) - math.log(k)
    probs = np.exp(logs)
    se = probs.std(axis=0, ddof=1) / math.sqrt(k) if k > 1 else np.zeros(3)
    mean = np.exp(mean_log)
    return ErrorEstimates(
        float(mean[0]), float(mean[1]), float(mean[2]),
        float(se[0]), float(se[1]), float(se[2]),
        k, method, float(mean_log[0]), float(mean_log[1]), float(mean_log[2]),
    )


def exact_y_average(
    cfg: EnsembleConfig,
    p: DetectorParams,
    codebooks: int,
    rng: np.random.Generator | None = None,
    budget: int = DEFAULT_BUDGET,
) -> ErrorEstimates:
    """Average of exact per-codebook error probabilities over sampled codebooks.

    Codebook ``i`` is drawn from its own spawned seed, so the result does not
    depend on evaluation order.
    """
    if codebooks < 1:
        raise ValueError("need at least one codebook")
    check_budget(cfg.dmc.n_outputs**cfg.n, budget)
    children = rng.spawn(codebooks) if rng is not None else np.random.SeedSequence(cfg.seed).spawn(codebooks)
    logs = np.empty((codebooks, 3))
    for i, child in enumerate(children):
        cb = sample_codebook(cfg, make_rng(child))
        e = exact_log_error_probabilities(cb, cfg.dmc, p, budget=budget)
        logs[i] = (e.fa, e.md, e.de)
    return _summarize(logs, "exact-y")


def type_class(counts, letters) -> list[tuple[int, ...]]:
    """All sequences with the given letter counts, in lexicographic order."""
    counts = list(counts)
    letters = list(letters)
    n = sum(counts)
    out: list[tuple[int, ...]] = []

    def rec(prefix, left):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for i, c in enumerate(left):
            if c:
                left[i] -= 1
                prefix.append(letters[i])
                rec(prefix, left)
                prefix.pop()
                left[i] += 1

    order = np.argsort(letters, kind="stable")
    letters = [letters[i] for i in order]
    counts = [counts[i] for i in order]
    rec([], counts)
    return out


def exact_full_oracle(cfg: EnsembleConfig, p: DetectorParams, budget: int = FULL_ORACLE_BUDGET) -> ErrorEstimates:
    """Exact ensemble averages: every codebook of the type class and every output."""
    size = math.exp(cfg.M * log_type_class_size(cfg.p)) * cfg.dmc.n_outputs**cfg.n
    if size > budget * (1 + 1e-9):
        raise ValueError(f"full enumeration needs about {size:.3g} terms, budget is {budget}")
    words = type_class(cfg.p.counts, cfg.dmc.inputs)
    logs = []
    for combo in itertools.product(words, repeat=cfg.M):
        cb = Codebook(np.array(combo, dtype=np.int64), cfg.p)
        e = exact_log_error_probabilities(cb, cfg.dmc, p, budget=budget)
        logs.append((e.fa, e.md, e.de))
    est = _summarize(np.array(logs), "exact-full")
    return ErrorEstimates(est.p_fa, est.p_md, est.p_de, 0.0, 0.0, 0.0, est.trials, "exact-full",
                          est.log_fa, est.log_md, est.log_de)


# exponent fit --------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentFit:
    """Fit of ``-ln p(n) = slope * n + intercept + log_coef * ln n``."""

    points: list
    slope: float
    intercept: float
    log_coef: float
    residual: float


def fit_exponent(series, prefactor: bool = False) -> ExponentFit:
    """Weighted least squares of ``-ln p`` on ``n``.

    ``series`` holds ``(n, p)`` or ``(n, p, stderr)`` items; with standard
    errors each point is weighted by ``(p / stderr)^2``, the inverse variance
    of ``ln p``.  ``prefactor`` adds an ``ln n`` regressor that absorbs
    polynomial factors in front of the exponential; it removes that bias but
    is much noisier on short, oscillating series.  Entries may also give
    ``ln p`` directly as ``(n, None, stderr, log_p)``.
    """
    rows = [tuple(item) for item in series]
    if len(rows) < 3:
        raise ValueError("need at least three points")
    ns, neg_logs, weights = [], [], []
    for row in rows:
        n, prob = row[0], row[1]
        log_p = row[3] if len(row) > 3 else None
        if log_p is None:
            if prob is None or not prob > 0:
                raise ValueError(f"probability at n={n} must be positive, got {prob}")
            log_p = math.log(prob)
        if not math.isfinite(log_p):
            raise ValueError(f"probability at n={n} must be positive")
        se = row[2] if len(row) > 2 else None
        rel = se / math.exp(log_p) if se else 0.0
        ns.append(float(n))
        neg_logs.append(-log_p)
        weights.append(1.0 / rel**2 if rel > 0 else math.nan)
    ns = np.array(ns)
    y = np.array(neg_logs)
    w = np.array(weights)
    if np.all(np.isnan(w)):
        w = np.ones_like(w)
    else:
        w = np.where(np.isnan(w), np.nanmax(w), w)
    cols = [ns, np.ones_like(ns)]
    if prefactor:
        cols.append(np.log(ns))
    a = np.column_stack(cols)
    sw = np.sqrt(w / w.max())
    coef, *_ = np.linalg.lstsq(a * sw[:, None], y * sw, rcond=None)
    resid = float(np.sqrt(np.mean((a @ coef - y) ** 2)))
    points = [(float(n), float(v / n)) for n, v in zip(ns, y)]
    return ExponentFit(points, float(coef[0]), float(coef[1]), float(coef[2]) if prefactor else 0.0, resid)


# rejection-region inclusions -------------------------------------------------------

@dataclass(frozen=True)
class InclusionReport:
    """Outputs rejected by the optimal detector but accepted by a variant."""

    outputs: int
    rejected: int
    max_violations: int
    np_violations: int | None  # None: not claimed (alpha < 0)


def inclusion_check(cb: Codebook, dmc: Dmc, p: DetectorParams, budget: int = DEFAULT_BUDGET) -> InclusionReport:
    """Exhaustively test that the optimal rejection region sits inside the
    max-only region, and inside the sum-only region when ``alpha >= 0``."""
    check_budget(dmc.n_outputs**cb.n, budget)
    total = rej = v_max = v_np = 0
    for ys in output_chunks(dmc.n_outputs, cb.n):
        logw, logq0 = _log_stats(cb, dmc, ys)
        star = _margins(logw, logq0, cb.n, p, Variant.OPTIMAL) <= 0
        total += ys.shape[0]
        rej += int(star.sum())
        v_max += int(np.count_nonzero(star & (_margins(logw, logq0, cb.n, p, Variant.MAX) > 0)))
        v_np += int(np.count_nonzero(star & (_margins(logw, logq0, cb.n, p, Variant.NEYMAN_PEARSON) > 0)))
    return InclusionReport(total, rej, v_max, v_np if p.alpha >= 0 else None)
