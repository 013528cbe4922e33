"""Global minimization over the probability simplex by grid plus refinement.

The objectives met here are cheap, low-dimensional and possibly
discontinuous (feasibility constraints), so a coarse grid locates the basins
and a derivative-free local search polishes the best few.  On two letters
the local search is a nested zoom on the segment; otherwise Nelder-Mead runs
on a softmax parameterization.  Ties resolve to the lowest grid index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.special import softmax

from .probability import compositions


@dataclass(frozen=True)
class SearchSettings:
    """Grid resolution ``1/resolution`` (``None``: pick from the dimension)."""

    resolution: int | None = None
    restarts: int = 3
    zoom_points: int = 21
    zoom_levels: int = 16

    def grid_for(self, dim: int) -> int:
        if self.resolution is not None:
            return self.resolution
        return {2: 256, 3: 64}.get(dim, 16)

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "restarts": self.restarts,
            "zoom_points": self.zoom_points,
            "zoom_levels": self.zoom_levels,
        }


def _best_indices(vals: np.ndarray, count: int) -> list[int]:
    order = np.argsort(vals, kind="stable")
    return [int(i) for i in order[:count] if math.isfinite(vals[i])]


def minimize_on_simplex(
    f: Callable[[np.ndarray], float], dim: int, settings: SearchSettings | None = None
) -> tuple[float, np.ndarray | None]:
    """Return ``(min value, argmin)``; ``(inf, None)`` if no grid point is finite."""
    settings = settings or SearchSettings()
    if dim == 1:
        x = np.ones(1)
        return f(x), x
    k = settings.grid_for(dim)
    if dim == 2:
        return _segment_search(f, k, settings)
    pts = compositions(k, dim) / k
    vals = np.array([f(x) for x in pts])
    starts = _best_indices(vals, settings.restarts)
    if not starts:
        return math.inf, None
    best_val, best_x = vals[starts[0]], pts[starts[0]]
    for i in starts:
        val, x = _nelder_mead(f, pts[i])
        if val < best_val:
            best_val, best_x = val, x
    return float(best_val), np.asarray(best_x)


def _segment_search(f, k, settings):
    point = lambda t: np.array([1.0 - t, t])
    grid = np.arange(k + 1) / k
    vals = np.array([f(point(t)) for t in grid])
    starts = _best_indices(vals, settings.restarts)
    if not starts:
        return math.inf, None
    best_val, best_t = vals[starts[0]], grid[starts[0]]
    for i in starts:
        c, h, v = grid[i], 1.0 / k, vals[i]
        for _ in range(settings.zoom_levels):
            ts = np.linspace(max(0.0, c - h), min(1.0, c + h), settings.zoom_points)
            fs = np.array([f(point(t)) for t in ts])
            j = int(np.argmin(fs))
            if fs[j] < v:
                c, v = ts[j], fs[j]
            h /= 5.0
        if v < best_val:
            best_val, best_t = v, c
    return float(best_val), point(best_t)


def _nelder_mead(f, x0):
    z0 = np.log(np.maximum(x0, 1e-6))
    z0 = z0[:-1] - z0[-1]
    to_x = lambda z: softmax(np.append(z, 0.0))
    res = minimize(
        lambda z: f(to_x(z)),
        z0,
        method="Nelder-Mead",
        options={"xatol": 1e-8, "fatol": 1e-11, "maxiter": 400 * z0.size, "adaptive": z0.size > 2},
    )
    return float(res.fun), to_x(res.x)
