"""Discrete memoryless channel with a silent input, random constant-composition
codebooks, and forward simulation.

Input letters are row indices of the transition matrix; the silent symbol is
one of them.  Codewords only use the remaining ("active") inputs.  Composition
counts are listed in the order of :attr:`Dmc.inputs`.

Randomness: every stochastic call takes an explicit
:class:`numpy.random.Generator`.  Seeded runs build PCG64 generators through
:class:`numpy.random.SeedSequence`, and parallel streams come from
``SeedSequence.spawn``; both are stable across numpy releases.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .probability import SUM_TOL, RENORMALIZE_TOL, Distribution, TypeDescriptor


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator for an integer seed or a SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class Dmc:
    w: np.ndarray
    silent: int

    @property
    def q0(self) -> Distribution:
        """Output distribution of the silent input (pure noise)."""
        return Distribution(self.w[self.silent])

    @property
    def inputs(self) -> tuple[int, ...]:
        """Active input letters, i.e. every row except the silent one."""
        return tuple(i for i in range(self.w.shape[0]) if i != self.silent)

    @property
    def n_outputs(self) -> int:
        return self.w.shape[1]

    @property
    def full_support(self) -> bool:
        return bool(np.all(self.w > 0))

    @property
    def log_w(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.w)

    def active_matrix(self) -> np.ndarray:
        """Rows of W restricted to the active inputs."""
        return self.w[list(self.inputs)]

    def active_matrix_log(self) -> np.ndarray:
        return self.log_w[list(self.inputs)]

    def zero_entries(self) -> list[tuple[int, int]]:
        return [tuple(int(v) for v in ij) for ij in np.argwhere(self.w == 0)]

    def to_dict(self) -> dict:
        return {"W": self.w.tolist(), "silent_index": self.silent}


def validate_dmc(rows, silent_index: int) -> Dmc:
    """Check a transition matrix and wrap it as a :class:`Dmc`.

    Rows within 1e-9 of unit mass are renormalized; the full-support flag is
    :attr:`Dmc.full_support`.
    """
    w = np.array(rows, dtype=float)
    if w.ndim != 2 or w.size == 0:
        raise ValueError("channel matrix must be a nonempty 2-d array")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("channel entries must be finite and nonnegative")
    sums = w.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > RENORMALIZE_TOL)
    if bad.size:
        raise ValueError(f"row {int(bad[0])} sums to {sums[bad[0]]!r}, not 1")
    if np.any(np.abs(sums - 1.0) > SUM_TOL):
        w = w / sums[:, None]
    if not 0 <= silent_index < w.shape[0]:
        raise ValueError(f"silent index {silent_index} out of range for {w.shape[0]} inputs")
    if w.shape[0] < 2:
        raise ValueError("no active inputs: the only input is the silent symbol")
    w.setflags(write=False)
    return Dmc(w=w, silent=int(silent_index))


@dataclass(frozen=True, eq=False)
class Codebook:
    """``M`` codewords of length ``n`` (rows of input-letter indices)."""

    codewords: np.ndarray
    composition: TypeDescriptor

    @property
    def M(self) -> int:
        return self.codewords.shape[0]

    @property
    def n(self) -> int:
        return self.codewords.shape[1]

    @property
    def rate(self) -> float:
        return math.log(self.M) / self.n


@dataclass(frozen=True)
class EnsembleConfig:
    dmc: Dmc
    p: TypeDescriptor
    n: int
    M: int
    seed: int = 0

    def __post_init__(self):
        if self.p.n != self.n:
            raise ValueError(f"composition counts sum to {self.p.n}, block length is {self.n}")
        if len(self.p.counts) != len(self.dmc.inputs):
            raise ValueError("composition must list one count per active input")
        if self.M < 1:
            raise ValueError("codebook needs M >= 1")

    def base_word(self) -> np.ndarray:
        """The composition multiset written out in sorted order."""
        return np.repeat(np.array(self.dmc.inputs, dtype=np.int64), self.p.counts)


def codebook_size(rate: float, n: int) -> int:
    """M = max(1, round(e^{nR}))."""
    return max(1, int(round(math.exp(n * rate))))


def sample_codebook(cfg: EnsembleConfig, rng: np.random.Generator | None = None) -> Codebook:
    """Draw M codewords independently and uniformly from the type class.

    Each codeword is an independent Fisher-Yates shuffle of the composition
    multiset.  Without ``rng`` the generator is seeded from ``cfg.seed``.
    """
    rng = make_rng(cfg.seed) if rng is None else rng
    words = np.tile(cfg.base_word(), (cfg.M, 1))
    words = rng.permuted(words, axis=1)
    words.setflags(write=False)
    return Codebook(codewords=words, composition=cfg.p)


def transmit(dmc: Dmc, x, rng: np.random.Generator) -> np.ndarray:
    """Pass an input sequence through the channel letter by letter."""
    x = np.asarray(x, dtype=np.int64)
    if x.size and (x.min() < 0 or x.max() >= dmc.w.shape[0]):
        raise ValueError("input letter outside the channel's input alphabet")
    cum = np.cumsum(dmc.w, axis=1)
    u = rng.random(x.shape)
    y = (u[..., None] >= cum[x]).sum(axis=-1)
    return np.minimum(y, dmc.n_outputs - 1)


def log_likelihood(dmc: Dmc, x, y) -> float:
    """sum_i ln W(y_i | x_i); ``-inf`` when any factor vanishes."""
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    return float(dmc.log_w[x, y].sum())


def log_noise_likelihood(dmc: Dmc, y) -> float:
    """sum_i ln Q0(y_i)."""
    y = np.asarray(y, dtype=np.int64)
    return float(dmc.log_w[dmc.silent, y].sum())
