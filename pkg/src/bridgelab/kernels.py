"""Reference diffusions, their transition kernels on a grid, and bridge laws.

The reference generator is ``sigma * (0.5 * d2 - U' d)``, reversible for
``m ∝ exp(-2U)``.  Time enters the closed-form kernels only through
``t_eff = sigma * t``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from numpy.polynomial import hermite_e
from scipy.special import logsumexp, ndtr

from .grid import Field, Grid, GridError, diff1, diff2

#: tabulated kernels: rows this many sd away from the edges are checked
RESOLVED_SD = 6.0
BROWNIAN, OU, TABULATED = "brownian", "ou", "tabulated"


class GridTooCoarseError(GridError):
    def __init__(self, msg="grid too coarse for this t"):
        super().__init__(msg)


@dataclass(frozen=True, eq=False)
class ReciprocalCharacteristic:
    """``U_script = (U'^2 - U'')/2`` and a lower bound on its second derivative."""

    U_script: Field
    alpha_sq: float


@dataclass(frozen=True, eq=False)
class ReferenceProcess:
    kind: str
    grid: Grid
    sigma: float = 1.0
    alpha: float = 0.0
    U_values: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in (BROWNIAN, OU, TABULATED):
            raise ValueError(f"unknown process kind {self.kind!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.kind == OU and not self.alpha > 0:
            raise ValueError("OU needs alpha > 0")
        if self.kind == TABULATED:
            if self.U_values is None:
                raise ValueError("tabulated process needs U values")
            u = np.array(self.U_values, dtype=float)
            if u.shape != (self.grid.n_points,) or not np.all(np.isfinite(u)):
                raise GridError("U must be finite on the grid")
            u.setflags(write=False)
            object.__setattr__(self, "U_values", u)

    @classmethod
    def brownian(cls, grid: Grid, sigma: float = 1.0) -> "ReferenceProcess":
        return cls(BROWNIAN, grid, sigma)

    @classmethod
    def ou(cls, grid: Grid, alpha: float, sigma: float = 1.0) -> "ReferenceProcess":
        return cls(OU, grid, sigma, alpha)

    @classmethod
    def tabulated(cls, grid: Grid, U, sigma: float = 1.0) -> "ReferenceProcess":
        return cls(TABULATED, grid, sigma, U_values=np.asarray(U, dtype=float))

    def with_sigma(self, sigma: float) -> "ReferenceProcess":
        return ReferenceProcess(self.kind, self.grid, sigma, self.alpha, self.U_values)

    def on_grid(self, grid: Grid) -> "ReferenceProcess":
        if self.kind == TABULATED:
            u = np.interp(grid.points, self.grid.points, self.U_values)
            return ReferenceProcess(TABULATED, grid, self.sigma, U_values=u)
        return ReferenceProcess(self.kind, grid, self.sigma, self.alpha)

    @property
    def improper(self) -> bool:
        return self.kind == BROWNIAN

    # potential and its derivatives
    @cached_property
    def U(self) -> Field:
        x = self.grid.points
        if self.kind == BROWNIAN:
            return Field(self.grid, np.zeros_like(x))
        if self.kind == OU:
            return Field(self.grid, 0.5 * self.alpha * x * x)
        return Field(self.grid, self.U_values)

    @cached_property
    def dU(self) -> np.ndarray:
        if self.kind == OU:
            return self.alpha * self.grid.points
        return diff1(self.U.values, self.grid.h)

    @cached_property
    def d2U(self) -> np.ndarray:
        if self.kind == OU:
            return np.full(self.grid.n_points, self.alpha)
        return diff2(self.U.values, self.grid.h)

    @cached_property
    def log_m(self) -> np.ndarray:
        """Log of the stationary density; normalized unless the process is Brownian."""
        x = self.grid.points
        if self.kind == BROWNIAN:
            return np.zeros_like(x)
        if self.kind == OU:
            return -self.alpha * x * x + 0.5 * math.log(self.alpha / math.pi)
        a = -2.0 * self.U.values
        return a - logsumexp(a, b=self.grid.weights)

    @property
    def m(self) -> np.ndarray:
        return np.exp(self.log_m)

    def reciprocal_characteristic(self) -> ReciprocalCharacteristic:
        h = self.grid.h
        u1 = diff1(self.U.values, h)
        u2 = diff2(self.U.values, h)
        us = 0.5 * (u1 * u1 - u2)
        return ReciprocalCharacteristic(Field(self.grid, us), float(np.min(diff2(us, h)[1:-1])))

    def generator(self, phi) -> np.ndarray:
        """``sigma * (phi''/2 - U' phi')`` by finite differences."""
        v = phi.values if isinstance(phi, Field) else np.asarray(phi, dtype=float)
        h = self.grid.h
        return self.sigma * (0.5 * diff2(v, h) - self.dU * diff1(v, h))

    def t_eff(self, t: float) -> float:
        return self.sigma * t


def _check_t(t):
    if not np.all(np.asarray(t) > 0):
        raise ValueError("t must be positive")


def ou_moments(x, t, alpha, sigma=1.0):
    """Mean and variance of X_t given X_0 = x (alpha = 0 means Brownian)."""
    s = sigma * np.asarray(t, dtype=float)
    if alpha == 0:
        return np.asarray(x, dtype=float) + 0.0 * s, s
    return np.exp(-alpha * s) * x, -np.expm1(-2.0 * alpha * s) / (2.0 * alpha)


def ou_log_transition_density(x, z, t, alpha, sigma=1.0):
    _check_t(t)
    mean, var = ou_moments(x, t, alpha, sigma)
    return -0.5 * (z - mean) ** 2 / var - 0.5 * np.log(2 * np.pi * var)


def ou_transition_density(x, z, t, alpha, sigma=1.0):
    """Gaussian density in z with mean exp(-alpha t_eff) x and variance 1/gamma(alpha, t_eff)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return np.exp(ou_log_transition_density(x, z, t, alpha, sigma))


def brownian_transition_density(x, z, t, sigma=1.0):
    return np.exp(ou_log_transition_density(x, z, t, 0.0, sigma))


def hermite_kernel_derivative(m: int, x, z, t, alpha, sigma=1.0):
    """m-th x-derivative of the OU transition density.

    With rho = exp(-alpha t_eff) and gamma the inverse variance,
    d^m/dx^m p = (rho sqrt(gamma))^m He_m(sqrt(gamma) (z - rho x)) p,
    He_m the probabilists' Hermite polynomial.
    """
    if m not in (1, 2, 3):
        raise ValueError("m must be 1, 2 or 3")
    _check_t(t)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    rho, var = ou_moments(1.0, t, alpha, sigma)
    sg = 1.0 / np.sqrt(var)
    u = sg * (np.asarray(z) - rho * np.asarray(x))
    coef = np.zeros(m + 1)
    coef[m] = 1.0
    return (rho * sg) ** m * hermite_e.hermeval(u, coef) * ou_transition_density(x, z, t, alpha, sigma)


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    """Tabulated ``p_t(x_i, x_j)`` (density in the second argument).

    ``row_factors`` are the quadrature row masses divided by the exact mass
    inside the grid; ``resolved`` marks rows with no mass past the edges.
    """

    process: ReferenceProcess
    t: float
    log_values: np.ndarray = field(repr=False)
    row_factors: Optional[np.ndarray] = field(default=None, repr=False)
    resolved: Optional[np.ndarray] = field(default=None, repr=False)
    trotter_change: Optional[float] = None

    @cached_property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)

    @property
    def grid(self) -> Grid:
        return self.process.grid

    def apply(self, f) -> np.ndarray:
        fv = f.values if isinstance(f, Field) else np.asarray(f, dtype=float)
        return self.values @ (self.grid.weights * fv)

    def apply_log(self, log_f) -> np.ndarray:
        lf = log_f.values if isinstance(log_f, Field) else np.asarray(log_f, dtype=float)
        return logsumexp(self.log_values + (self.grid.log_weights + lf)[None, :], axis=1)

    def compose(self, other: "TransitionKernel") -> np.ndarray:
        """Quadrature composition ``int p(x,y) q(y,z) dy``."""
        return (self.values * self.grid.weights[None, :]) @ other.values


def _gaussian_log_table(process: ReferenceProcess, t: float):
    x = process.grid.points
    alpha = process.alpha if process.kind == OU else 0.0
    mean, var = ou_moments(x, t, alpha, process.sigma)
    lv = -0.5 * (x[None, :] - mean[:, None]) ** 2 / var - 0.5 * np.log(2 * np.pi * var)
    sd = math.sqrt(var)
    g = process.grid
    # exact Gaussian mass that falls inside [lower, upper], per row
    inside = ndtr((g.upper - mean) / sd) - ndtr((g.lower - mean) / sd)
    return lv, inside


def build_kernel(process: ReferenceProcess, t: float, strict: bool = True) -> TransitionKernel:
    """Tabulate the transition density at time ``t`` on the process grid.

    ``row_factors`` is each row's quadrature mass over the exact Gaussian
    mass inside the grid, a pure measure of resolution; it must lie in
    [0.99, 1.01].  Rows with no mass past the edges are rescaled to unit
    mass; edge rows stay sub-stochastic, which keeps detailed balance.
    ``strict=False`` skips check and rescaling.
    """
    _check_t(t)
    if process.kind == TABULATED:
        return _tabulated_kernel(process, t, strict)
    lv, inside = _gaussian_log_table(process, t)
    lw = process.grid.log_weights
    quad = np.exp(logsumexp(lv + lw[None, :], axis=1))
    factors = quad / inside
    resolved = inside >= 1.0 - 1e-12
    if strict:
        if np.any(factors < 0.99) or np.any(factors > 1.01):
            raise GridTooCoarseError()
        # edge rows are not rescaled: their trapezoid error is O(h^2) and
        # rescaling them would break the symmetry of m p
        lv[resolved] -= np.log(factors[resolved])[:, None]
    return TransitionKernel(process, float(t), lv, factors, resolved)


def _compose_power(step: np.ndarray, w: np.ndarray, n: int) -> np.ndarray:
    """n-fold quadrature self-composition by binary powering."""
    result = None
    base = step
    while True:
        if n & 1:
            result = base if result is None else (result * w[None, :]) @ base
        n >>= 1
        if not n:
            return result
        base = (base * w[None, :]) @ base


def _trotter(process: ReferenceProcess, Kv: np.ndarray, t: float, n: int, strict=True) -> np.ndarray:
    d = t / n
    p = build_kernel(process, d, strict=strict)
    half = np.exp(-0.5 * d * Kv)
    step = half[:, None] * p.values * half[None, :]
    return _compose_power(step, process.grid.weights, n)


def fk_kernel(process: ReferenceProcess, K, t: float, n_trotter: int,
              trotter_tol: float = 1e-6, check: bool = True, strict: bool = True) -> TransitionKernel:
    """Feynman-Kac kernel of ``exp(t (generator - K))`` by symmetric Trotter splitting.

    The minimum of K is factored out exactly, so constant K only rescales the
    plain kernel.  When ``check`` is set the splitting is repeated with twice
    as many steps and the largest entry change is stored in ``trotter_change``.
    """
    _check_t(t)
    if n_trotter < 1:
        raise ValueError("n_trotter must be >= 1")
    Kv = K.values if isinstance(K, Field) else np.asarray(K, dtype=float)
    if Kv.shape != (process.grid.n_points,) or not np.all(np.isfinite(Kv)):
        raise GridError("K must be finite on the grid")
    kmin = float(Kv.min())
    Kr = Kv - kmin
    if not np.any(Kr):
        base = build_kernel(process, t, strict=strict)
        return TransitionKernel(process, float(t), base.log_values - kmin * t,
                                base.row_factors, base.resolved, 0.0)
    vals = _trotter(process, Kr, t, n_trotter, strict)
    change = None
    if check:
        fine = _trotter(process, Kr, t, 2 * n_trotter, strict)
        change = float(np.max(np.abs(fine - vals)) * math.exp(-kmin * t))
        if change > trotter_tol:
            warnings.warn(f"n_trotter={n_trotter} too small: doubling changes entries by {change:.3g}")
    with np.errstate(divide="ignore"):
        lv = np.log(vals) - kmin * t
    return TransitionKernel(process, float(t), lv, trotter_change=change)


#: Trotter steps per unit (effective) time for tabulated potentials
TABULATED_TROTTER_RATE = 256


def _tabulated_kernel(process: ReferenceProcess, t: float, strict: bool) -> TransitionKernel:
    # ground-state transform: p_t(x, z) = exp(U(x)) k_t(x, z) exp(-U(z)) with k
    # the Feynman-Kac kernel of Brownian motion killed at rate sigma * U_script
    bm = ReferenceProcess.brownian(process.grid, process.sigma)
    Us = process.reciprocal_characteristic().U_script.values
    n = max(1, int(math.ceil(TABULATED_TROTTER_RATE * process.sigma * t)))
    k = fk_kernel(bm, process.sigma * Us, t, n, check=False, strict=strict)
    u = process.U.values
    lv = k.log_values + u[:, None] - u[None, :]
    lw = process.grid.log_weights
    factors = np.exp(logsumexp(lv + lw[None, :], axis=1))
    sd = math.sqrt(process.sigma * t)
    g = process.grid
    x = g.points
    resolved = (x - RESOLVED_SD * sd >= g.lower) & (x + RESOLVED_SD * sd <= g.upper)
    if strict:
        if not resolved.any():
            raise GridTooCoarseError("grid too narrow for this t")
        fr = factors[resolved]
        if np.any(fr < 0.99) or np.any(fr > 1.01):
            raise GridTooCoarseError()
    return TransitionKernel(process, float(t), lv, factors, resolved)


def bridge_moments(x, y, t, alpha, sigma=1.0):
    """Mean and variance of the time-t marginal of the x -> y bridge on [0, 1]."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0) or np.any(t >= 1):
        raise ValueError("t must lie in (0, 1)")
    r_a, v_a = ou_moments(1.0, t, alpha, sigma)
    r_b, v_b = ou_moments(1.0, 1.0 - t, alpha, sigma)
    prec = 1.0 / v_a + r_b * r_b / v_b
    mean = (r_a * np.asarray(x) / v_a + r_b * np.asarray(y) / v_b) / prec
    return mean, 1.0 / prec


def ou_bridge_sample(x, y, t, alpha, sigma=1.0, rng_seed=None):
    """Draw from the bridge marginal at time t.  ``rng_seed`` may be a seed or a Generator."""
    mean, var = bridge_moments(x, y, t, alpha, sigma)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    out = mean + np.sqrt(var) * rng.standard_normal(np.shape(mean))
    return float(out) if np.ndim(out) == 0 else out
