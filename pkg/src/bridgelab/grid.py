"""Uniform 1D grids, sampled functions and the finite-difference calculus on them."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np

MASS_FLOOR = 1e-12
LOG_FLOOR = 1e-300


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform lattice ``lower + i*h``, ``i = 0..n_points-1``."""

    lower: float
    upper: float
    n_points: int

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 3:
            raise GridError("n_points must be an integer >= 3")
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)) or self.upper <= self.lower:
            raise GridError("need finite bounds with upper > lower")
        object.__setattr__(self, "n_points", int(self.n_points))
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))

    @property
    def h(self) -> float:
        return (self.upper - self.lower) / (self.n_points - 1)

    @cached_property
    def points(self) -> np.ndarray:
        x = self.lower + self.h * np.arange(self.n_points)
        x[-1] = self.upper
        x.setflags(write=False)
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights."""
        w = np.full(self.n_points, self.h)
        w[0] = w[-1] = 0.5 * self.h
        w.setflags(write=False)
        return w

    @cached_property
    def log_weights(self) -> np.ndarray:
        lw = np.log(self.weights)
        lw.setflags(write=False)
        return lw

    def refine(self, factor: float) -> "Grid":
        """Same interval with (n-1)*factor intervals."""
        n = int(round((self.n_points - 1) * factor)) + 1
        return Grid(self.lower, self.upper, n)


def _frozen(values) -> np.ndarray:
    a = np.array(values, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Field:
    """Real function sampled on the points of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != (self.grid.n_points,):
            raise GridError(f"expected {self.grid.n_points} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise GridError("non-finite input")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        return cls(grid, fn(grid.points))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return self.grid.n_points


@dataclass(frozen=True, eq=False)
class Density(Field):
    """Nonnegative field with unit trapezoid mass.

    ``log_values`` optionally carries an accurate logarithm (possibly -inf),
    which is preferred over ``log(values)`` in the far tails.
    """

    log_values: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise GridError(f"expected {self.grid.n_points} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise GridError("non-finite input")
        if np.any(v < 0):
            raise GridError("density values must be nonnegative")
        mass = float(np.dot(self.grid.weights, v))
        if not mass > 0:
            raise GridError("density has zero mass")
        lv = self.log_values
        if lv is not None:
            lv = np.array(lv, dtype=float)
            if lv.shape != v.shape or np.any(np.isnan(lv)) or np.any(lv == np.inf):
                raise GridError("bad log_values")
            lv = lv - np.log(mass)
            lv.setflags(write=False)
        object.__setattr__(self, "values", _frozen(v / mass))
        object.__setattr__(self, "log_values", lv)

    @classmethod
    def from_log(cls, grid: Grid, log_values) -> "Density":
        lv = np.asarray(log_values, dtype=float)
        top = np.max(lv)
        if not np.isfinite(top):
            raise GridError("density has zero mass")
        return cls(grid, np.exp(lv - top), log_values=lv - top)

    @property
    def log(self) -> np.ndarray:
        if self.log_values is not None:
            return self.log_values
        return np.log(np.maximum(self.values, LOG_FLOOR))

    def mask(self, floor: float = MASS_FLOOR) -> np.ndarray:
        return self.values >= floor

    def mean(self) -> float:
        return float(np.dot(self.grid.weights, self.grid.points * self.values))

    def variance(self) -> float:
        m = self.mean()
        return float(np.dot(self.grid.weights, (self.grid.points - m) ** 2 * self.values))

    def cdf(self) -> np.ndarray:
        """Cumulative trapezoid integral at the grid points, ending at 1."""
        v, h = self.values, self.grid.h
        c = np.concatenate([[0.0], np.cumsum(0.5 * h * (v[1:] + v[:-1]))])
        return c / c[-1]


ArrayLike = Union[Field, np.ndarray]


def _vals(f: ArrayLike, grid: Optional[Grid] = None) -> np.ndarray:
    if isinstance(f, Field):
        if grid is not None and f.grid != grid:
            raise GridError("grid mismatch")
        return f.values
    v = np.asarray(f, dtype=float)
    if grid is not None and v.shape != (grid.n_points,):
        raise GridError("grid mismatch")
    return v


def _check_finite(v: np.ndarray):
    if not np.all(np.isfinite(v)):
        raise GridError("non-finite input")


def diff1(values: np.ndarray, h: float) -> np.ndarray:
    """Central first difference, second-order one-sided at the ends."""
    return np.gradient(values, h, edge_order=2)


def diff2(values: np.ndarray, h: float) -> np.ndarray:
    """Second difference, endpoints copied from their neighbours."""
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / (h * h)
    out[0] = out[1]
    out[-1] = out[-2]
    return out


def gradient(f: Field) -> Field:
    _check_finite(f.values)
    return Field(f.grid, diff1(f.values, f.grid.h))


def laplacian(f: Field) -> Field:
    _check_finite(f.values)
    return Field(f.grid, diff2(f.values, f.grid.h))


def integrate(f: ArrayLike, against: Union[Density, str] = "lebesgue",
              grid: Optional[Grid] = None, mask: Optional[np.ndarray] = None) -> float:
    """Trapezoid integral of ``f`` against Lebesgue measure or a density.

    Masked-out points contribute zero.
    """
    if isinstance(against, Density):
        if isinstance(f, Field) and f.grid != against.grid:
            raise GridError("grid mismatch")
        g = against.grid
        v = _vals(f, g) * against.values
    elif against == "lebesgue":
        g = f.grid if isinstance(f, Field) else grid
        if g is None:
            raise GridError("need a grid for raw arrays")
        v = _vals(f, g)
    else:
        raise GridError(f"unknown measure {against!r}")
    if mask is not None:
        v = np.where(mask, v, 0.0)
    return float(np.dot(g.weights, v))


def weighted_l2_norm(v: ArrayLike, mu: Density, mask: Optional[np.ndarray] = None) -> float:
    vv = _vals(v, mu.grid)
    return float(np.sqrt(integrate(vv * vv, mu, mask=mask)))
