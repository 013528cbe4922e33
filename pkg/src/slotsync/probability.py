"""Finite-alphabet probability primitives.

Distributions are stored as read-only float64 arrays.  Types and empirical
joints also keep their integer counts, so any logic that branches on type
identity can work with exact integers instead of tolerances.

All logarithms are natural (nats).  Conventions: ``0 ln 0 = 0``,
``0 ln(0/0) = 0`` and ``p ln(p/0) = +inf`` for ``p > 0``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.special import xlogy

SUM_TOL = 1e-12
RENORMALIZE_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_mass(probs: np.ndarray, what: str) -> np.ndarray:
    if probs.size == 0:
        raise ValueError(f"{what} must have at least one entry")
    if not np.all(np.isfinite(probs)):
        raise ValueError(f"{what} has non-finite entries")
    if np.any(probs < 0):
        raise ValueError(f"{what} has negative entries")
    total = probs.sum()
    if abs(total - 1.0) > RENORMALIZE_TOL:
        raise ValueError(f"{what} sums to {total!r}, not 1")
    if abs(total - 1.0) > SUM_TOL:
        probs = probs / total
    return probs


@dataclass(frozen=True)
class Distribution:
    """Probability vector over a finite alphabet ``{0, ..., len-1}``.

    Sums within 1e-9 of one are renormalized on construction; anything
    further off is rejected.
    """

    probs: np.ndarray

    def __post_init__(self):
        probs = _check_mass(np.asarray(self.probs, dtype=float).ravel(), "distribution")
        object.__setattr__(self, "probs", _frozen(probs))

    def __len__(self) -> int:
        return self.probs.size

    def __getitem__(self, i):
        return self.probs[i]

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)


@dataclass(frozen=True)
class JointDistribution:
    """Distribution over a product alphabet X x Y, stored as a matrix.

    ``counts`` (and ``n``) are set for empirical joints so that type-level
    comparisons stay exact.  ``x_labels``/``y_labels`` record which symbols the
    rows and columns stand for when they are not simply ``0..k-1``.
    """

    probs: np.ndarray
    counts: np.ndarray | None = None
    x_labels: tuple | None = None
    y_labels: tuple | None = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 2:
            raise ValueError("joint distribution must be a matrix")
        probs = _check_mass(probs, "joint distribution")
        object.__setattr__(self, "probs", _frozen(probs))
        if self.counts is not None:
            counts = np.array(self.counts, dtype=np.int64)
            if counts.shape != probs.shape or np.any(counts < 0):
                raise ValueError("counts must be a nonnegative matrix shaped like probs")
            counts.setflags(write=False)
            object.__setattr__(self, "counts", counts)
        for name, size in (("x_labels", probs.shape[0]), ("y_labels", probs.shape[1])):
            labels = getattr(self, name)
            if labels is not None:
                labels = tuple(labels)
                if len(labels) != size:
                    raise ValueError(f"{name} has {len(labels)} entries, expected {size}")
                object.__setattr__(self, name, labels)

    @classmethod
    def from_conditional(cls, p_x, q_y_given_x) -> "JointDistribution":
        """Joint ``p(x) q(y|x)``; rows of the conditional must be distributions."""
        p_x = np.asarray(p_x, dtype=float)
        cond = np.asarray(q_y_given_x, dtype=float)
        return cls(p_x[:, None] * cond)

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    @property
    def n(self) -> int | None:
        return None if self.counts is None else int(self.counts.sum())

    @property
    def x_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    @property
    def y_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    def y_given_x(self) -> np.ndarray:
        """Rows Q(y|x); rows with zero X-mass are left uniform."""
        return _conditional_rows(self.probs)

    def x_given_y(self) -> np.ndarray:
        """Columns Q(x|y) laid out as a matrix indexed [x, y]."""
        return _conditional_rows(self.probs.T).T

    def cell(self, x, y) -> float:
        """Probability of the labelled cell ``(x, y)``."""
        i = self.x_labels.index(x) if self.x_labels is not None else x
        j = self.y_labels.index(y) if self.y_labels is not None else y
        return float(self.probs[i, j])

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)


def _conditional_rows(m: np.ndarray) -> np.ndarray:
    rows = m.sum(axis=1, keepdims=True)
    out = np.full_like(m, 1.0 / m.shape[1])
    np.divide(m, rows, out=out, where=rows[:, 0:1] > 0)
    return out


@dataclass(frozen=True)
class TypeDescriptor:
    """Integer letter counts of a length-``n`` sequence."""

    counts: tuple[int, ...]
    n: int = field(init=False)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if not counts:
            raise ValueError("type needs at least one letter")
        if any(c < 0 for c in counts):
            raise ValueError("type counts must be nonnegative")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "n", sum(counts))

    @classmethod
    def from_distribution(cls, p, n: int) -> "TypeDescriptor":
        """Closest type with denominator ``n`` (largest-remainder rounding)."""
        p = np.asarray(p, dtype=float)
        raw = p * n
        counts = np.floor(raw).astype(int)
        short = n - counts.sum()
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
        return cls(tuple(counts))

    def distribution(self) -> Distribution:
        return Distribution(np.asarray(self.counts, dtype=float) / self.n)


def _as_pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"alphabet mismatch: {p.shape} vs {q.shape}")
    return p, q


def kl_divergence(p, q) -> float:
    """Relative entropy D(p || q) in nats; ``inf`` if p is not dominated by q."""
    p, q = _as_pair(p, q)
    if np.any((q == 0) & (p > 0)):
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = xlogy(p, p) - xlogy(p, q)
    return max(float(terms.sum()), 0.0)


def conditional_kl(q_yx, w, p) -> float:
    """Conditional divergence sum_x p(x) D(q(.|x) || w(.|x))."""
    q_yx = np.asarray(q_yx, dtype=float)
    w = np.asarray(w, dtype=float)
    p = np.asarray(p, dtype=float)
    if q_yx.shape != w.shape or q_yx.ndim != 2 or p.shape != (q_yx.shape[0],):
        raise ValueError(f"shape mismatch: {q_yx.shape}, {w.shape}, {p.shape}")
    total = 0.0
    for px, qrow, wrow in zip(p, q_yx, w):
        if px > 0:
            total += px * kl_divergence(qrow, wrow)
    return total


def mutual_information(q) -> float:
    """I(X;Y) of a joint distribution given as a matrix or JointDistribution."""
    m = np.asarray(q, dtype=float)
    prod = m.sum(axis=1, keepdims=True) * m.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = xlogy(m, m) - xlogy(m, prod)
    return max(float(terms.sum()), 0.0)


def empirical_joint(x: Sequence, y: Sequence, x_alphabet=None, y_alphabet=None) -> JointDistribution:
    """Joint type of two equal-length sequences.

    Rows and columns follow ``x_alphabet``/``y_alphabet`` (default: the sorted
    symbols that occur).
    """
    x = list(x)
    y = list(y)
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if not x:
        raise ValueError("empty sequences have no type")
    xa = tuple(sorted(set(x))) if x_alphabet is None else tuple(x_alphabet)
    ya = tuple(sorted(set(y))) if y_alphabet is None else tuple(y_alphabet)
    xi = {s: i for i, s in enumerate(xa)}
    yi = {s: i for i, s in enumerate(ya)}
    counts = np.zeros((len(xa), len(ya)), dtype=np.int64)
    for a, b in zip(x, y):
        counts[xi[a], yi[b]] += 1
    return JointDistribution(counts / len(x), counts=counts, x_labels=xa, y_labels=ya)


def log_type_class_size(t: TypeDescriptor) -> float:
    """ln(n! / prod_a counts[a]!), from exact integer arithmetic."""
    size = 1
    remaining = t.n
    for c in t.counts:
        size *= math.comb(remaining, c)
        remaining -= c
    return math.log(size)


def compositions(total: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``total``.

    Rows come out in lexicographic order.  The result is shared between calls
    and therefore read-only.
    """
    if parts < 1 or total < 0:
        raise ValueError("need parts >= 1 and total >= 0")
    return _compositions(total, parts)


@functools.lru_cache(maxsize=256)
def _compositions(total: int, parts: int) -> np.ndarray:
    if parts == 1:
        out = np.array([[total]], dtype=np.int64)
    else:
        blocks = []
        for first in range(total + 1):
            rest = _compositions(total - first, parts - 1)
            head = np.full((rest.shape[0], 1), first, dtype=np.int64)
            blocks.append(np.hstack([head, rest]))
        out = np.vstack(blocks)
    out.setflags(write=False)
    return out


def enumerate_joint_types(nx: int, ny: int, n: int) -> Iterator[JointDistribution]:
    """Every joint type on an nx-by-ny alphabet with denominator n."""
    if n < 1 or nx < 1 or ny < 1:
        raise ValueError("need n, nx, ny >= 1")
    for c in compositions(n, nx * ny):
        counts = c.reshape(nx, ny)
        yield JointDistribution(counts / n, counts=counts)


def simplex_grid(dim: int, k: int) -> list[Distribution]:
    """All distributions on ``dim`` letters whose entries are multiples of 1/k."""
    if dim < 1 or k < 1:
        raise ValueError("need dim >= 1 and k >= 1")
    return [Distribution(c / k) for c in compositions(k, dim)]
