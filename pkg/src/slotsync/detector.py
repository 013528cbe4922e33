"""Optimal detection/decoding for slotted transmission and exact error sums.

Decisions are integers: ``REJECT`` (0) means "nothing was sent", ``m`` in
``1..M`` means codeword ``m`` was decoded.  This matches labelling a
partition ``R_0, R_1, ..., R_M`` of the output space.

The optimal detector rejects ``y`` when

    e^{n alpha} sum_m W(y|x_m) + max_m W(y|x_m) <= e^{n beta} Q0(y)

and otherwise decodes by maximum likelihood, lowest index on ties.  Points on
the boundary are rejected.  Everything is evaluated in the log domain.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
from scipy.special import logsumexp

from .channel import Codebook, Dmc

REJECT = 0
DEFAULT_BUDGET = 20_000_000


class BudgetExceededError(RuntimeError):
    """An exhaustive enumeration would exceed its configured size."""


@dataclass(frozen=True)
class DetectorParams:
    """Exponent-scaled thresholds: ``a = e^{n alpha}``, ``b = e^{n beta}``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("alpha and beta must be finite")


class Variant(str, enum.Enum):
    OPTIMAL = "optimal"
    NEYMAN_PEARSON = "np"  # sum term only
    MAX = "max"  # max term only


def _log_stats(cb: Codebook, dmc: Dmc, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-output log-likelihoods: (K x M) for the codewords, (K,) for noise."""
    log_w = dmc.log_w
    logw = np.empty((ys.shape[0], cb.M))
    for m, word in enumerate(cb.codewords):
        logw[:, m] = log_w[word, ys].sum(axis=1)
    logq0 = log_w[dmc.silent][ys].sum(axis=1)
    return logw, logq0


def _margins(logw: np.ndarray, logq0: np.ndarray, n: int, p: DetectorParams, variant: Variant) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        if variant is Variant.MAX:
            num = logw.max(axis=1)
        else:
            num = n * p.alpha + logsumexp(logw, axis=1)
            if variant is Variant.OPTIMAL:
                # two-term combination keeps num >= each part exactly in floating point
                num = np.logaddexp(num, logw.max(axis=1))
        margin = num - (n * p.beta + logq0)
    # 0 <= b * 0: an output impossible under every hypothesis is rejected
    return np.where(np.isnan(margin), -np.inf, margin)


def _decide(logw, logq0, n, p, variant) -> np.ndarray:
    margin = _margins(logw, logq0, n, p, variant)
    return np.where(margin <= 0, REJECT, np.argmax(logw, axis=1) + 1)


def _single(cb: Codebook, dmc: Dmc, y) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.int64).reshape(1, -1)
    if y.shape[1] != cb.n:
        raise ValueError(f"output length {y.shape[1]} does not match block length {cb.n}")
    return _log_stats(cb, dmc, y)


def rejection_margin(cb: Codebook, dmc: Dmc, y, p: DetectorParams) -> float:
    """ln[e^{n alpha} sum_m W(y|x_m) + max_m W(y|x_m)] - ln[e^{n beta} Q0(y)].

    ``y`` is rejected exactly when this is <= 0.
    """
    logw, logq0 = _single(cb, dmc, y)
    return float(_margins(logw, logq0, cb.n, p, Variant.OPTIMAL)[0])


def detect_and_decode(cb: Codebook, dmc: Dmc, y, p: DetectorParams) -> int:
    logw, logq0 = _single(cb, dmc, y)
    return int(_decide(logw, logq0, cb.n, p, Variant.OPTIMAL)[0])


def detect_np_variant(cb: Codebook, dmc: Dmc, y, p: DetectorParams) -> int:
    """Neyman-Pearson form: reject iff e^{n alpha} sum_m W <= e^{n beta} Q0."""
    logw, logq0 = _single(cb, dmc, y)
    return int(_decide(logw, logq0, cb.n, p, Variant.NEYMAN_PEARSON)[0])


def detect_max_variant(cb: Codebook, dmc: Dmc, y, p: DetectorParams) -> int:
    """Silence as an extra codeword: reject iff max_m W <= e^{n beta} Q0."""
    logw, logq0 = _single(cb, dmc, y)
    return int(_decide(logw, logq0, cb.n, p, Variant.MAX)[0])


def output_chunks(n_outputs: int, n: int, chunk: int = 1 << 16) -> Iterator[np.ndarray]:
    """All of Y^n in lexicographic order, as (K x n) integer blocks."""
    total = n_outputs**n
    place = n_outputs ** np.arange(n - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        yield (idx[:, None] // place) % n_outputs


def check_budget(size: int, budget: int) -> None:
    if size > budget:
        raise BudgetExceededError(f"enumeration of {size} outputs exceeds budget {budget}")


def _masked_lse(values: np.ndarray, mask: np.ndarray) -> float:
    if not mask.any():
        return -math.inf
    with np.errstate(divide="ignore"):
        return float(logsumexp(values[mask]))


def _combine(parts: list[float]) -> float:
    with np.errstate(divide="ignore"):
        return float(logsumexp(parts)) if parts else -math.inf


@dataclass(frozen=True)
class LogErrors:
    """Natural logs of (P_FA, P_MD, P_DE)."""

    fa: float
    md: float
    de: float

    def probabilities(self) -> tuple[float, float, float]:
        return math.exp(self.fa), math.exp(self.md), math.exp(self.de)


def partition_log_errors(
    cb: Codebook,
    dmc: Dmc,
    labeler: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
    budget: int = DEFAULT_BUDGET,
) -> LogErrors:
    """Exact error probabilities (in logs) of an arbitrary partition of Y^n.

    ``labeler(ys, logw, logq0)`` maps a block of outputs to labels in
    ``0..M``.  Sums run over Y^n in lexicographic chunks and are reduced in a
    fixed order.
    """
    check_budget(dmc.n_outputs**cb.n, budget)
    fa, md, de = [], [], []
    for ys in output_chunks(dmc.n_outputs, cb.n):
        logw, logq0 = _log_stats(cb, dmc, ys)
        labels = np.asarray(labeler(ys, logw, logq0))
        fa.append(_masked_lse(logq0, labels != REJECT))
        rejected = labels == REJECT
        for m in range(cb.M):
            md.append(_masked_lse(logw[:, m], rejected))
            de.append(_masked_lse(logw[:, m], labels != m + 1))
    log_m = math.log(cb.M)
    return LogErrors(_combine(fa), _combine(md) - log_m, _combine(de) - log_m)


def detector_labeler(p: DetectorParams, variant: Variant | str = Variant.OPTIMAL):
    variant = Variant(variant)

    def label(ys, logw, logq0):
        return _decide(logw, logq0, ys.shape[1], p, variant)

    return label


def exact_log_error_probabilities(
    cb: Codebook, dmc: Dmc, p: DetectorParams, detector: Variant | str = Variant.OPTIMAL,
    budget: int = DEFAULT_BUDGET,
) -> LogErrors:
    return partition_log_errors(cb, dmc, detector_labeler(p, detector), budget)


def exact_error_probabilities(
    cb: Codebook, dmc: Dmc, p: DetectorParams, detector: Variant | str = Variant.OPTIMAL,
    budget: int = DEFAULT_BUDGET,
) -> tuple[float, float, float]:
    """(P_FA, P_MD, P_DE) of one code, summed exactly over Y^n.

    P_DE counts rejections as errors, so P_MD <= P_DE.
    """
    return exact_log_error_probabilities(cb, dmc, p, detector, budget).probabilities()


@dataclass(frozen=True)
class DominanceReport:
    fa_star: float
    md_star: float
    de_star: float
    fa: float
    md: float
    de: float
    premise: bool
    lemma_holds: bool


def _competitor_labeler(competitor, n_outputs: int):
    if callable(competitor):
        def label(ys, logw, logq0):
            return np.array([competitor(tuple(int(v) for v in y)) for y in ys], dtype=np.int64)
    else:
        table = np.asarray(competitor, dtype=np.int64)
        def label(ys, logw, logq0):
            place = n_outputs ** np.arange(ys.shape[1] - 1, -1, -1, dtype=np.int64)
            return table[ys @ place]
    return label


def dominance_check(cb: Codebook, dmc: Dmc, p: DetectorParams, competitor, budget: int = DEFAULT_BUDGET) -> DominanceReport:
    """Compare the optimal partition with a competing one.

    ``competitor`` is either a callable mapping an output tuple to a label in
    ``0..M`` or an array of labels indexed by the lexicographic rank of the
    output.  The implication "competitor no worse on FA and MD => optimal no
    worse on DE" is checked with a floating-point slack scaled by the
    thresholds.
    """
    star = exact_error_probabilities(cb, dmc, p, budget=budget)
    other = partition_log_errors(cb, dmc, _competitor_labeler(competitor, dmc.n_outputs), budget).probabilities()
    fa_s, md_s, de_s = star
    fa, md, de = other
    premise = fa <= fa_s and md <= md_s
    a = math.exp(cb.n * p.alpha)
    b = math.exp(cb.n * p.beta)
    slack = 1e-12 * (1.0 + b / cb.M + a)
    holds = (not premise) or de_s <= de + slack
    if any(np.isnan(v) for v in (*star, *other)):
        holds = False
    return DominanceReport(fa_s, md_s, de_s, fa, md, de, premise, holds)
