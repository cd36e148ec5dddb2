"""Named families of marginal densities, tabulated on a grid with exact logs."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .grid import Density, Grid, GridError


def gaussian_log_pdf(x, mean: float, variance: float):
    return -0.5 * (np.asarray(x) - mean) ** 2 / variance - 0.5 * np.log(2 * np.pi * variance)


def gaussian(grid: Grid, mean: float = 0.0, variance: float = 1.0) -> Density:
    if not variance > 0:
        raise GridError("variance must be positive")
    return Density.from_log(grid, gaussian_log_pdf(grid.points, mean, variance))


def gaussian_mixture(grid: Grid, components: Sequence[dict]) -> Density:
    """``components``: dicts with ``weight``, ``mean``, ``variance``."""
    if not components:
        raise GridError("empty mixture")
    w = np.array([c.get("weight", 1.0) for c in components], dtype=float)
    if np.any(w <= 0):
        raise GridError("mixture weights must be positive")
    logs = [np.log(wi) + gaussian_log_pdf(grid.points, c["mean"], c["variance"])
            for wi, c in zip(w / w.sum(), components)]
    return Density.from_log(grid, logsumexp(np.vstack(logs), axis=0))


def uniform(grid: Grid, a: float, b: float) -> Density:
    if not b > a:
        raise GridError("uniform needs b > a")
    x = grid.points
    inside = (x >= a) & (x <= b)
    if not inside.any():
        raise GridError("uniform support misses the grid")
    return Density.from_log(grid, np.where(inside, 0.0, -np.inf))


def tabulated(grid: Grid, file: str) -> Density:
    """Two-column text file ``x density``; linearly interpolated, zero outside."""
    data = np.loadtxt(Path(file), delimiter=None if not str(file).endswith(".csv") else ",",
                      ndmin=2)
    if data.shape[1] < 2:
        raise GridError("tabulated density needs two columns")
    xs, ys = data[:, 0], data[:, 1]
    order = np.argsort(xs)
    vals = np.interp(grid.points, xs[order], ys[order], left=0.0, right=0.0)
    return Density(grid, vals)


FAMILIES = {
    "gaussian": gaussian,
    "gaussian_mixture": gaussian_mixture,
    "uniform": uniform,
    "tabulated": tabulated,
}


def from_spec(grid: Grid, spec: dict) -> Density:
    spec = dict(spec)
    family = spec.pop("family", None)
    if family not in FAMILIES:
        raise GridError(f"unknown marginal family {family!r}")
    return FAMILIES[family](grid, **spec)
