"""Marginal flow of a Schrödinger bridge: f_t, g_t, mu_t and the velocity field.

Everything is propagated in log form, ``log f_t = log int p_t(., z) f(z) dz``,
so tails keep full relative precision.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .grid import LOG_FLOOR, MASS_FLOOR, Density, Field, Grid, GridError, diff1, diff2
from .kernels import OU, BROWNIAN, ReferenceProcess, bridge_moments, build_kernel, fk_kernel
from .solver import SchrodingerSolution

log = logging.getLogger(__name__)
_LOG_FLOOR = math.log(LOG_FLOOR)


@dataclass(frozen=True)
class TildeFields:
    """``log f~_t = log f_t - U + c/2`` with ``log m = -2U + c``, so ``f~ g~ = mu_t``."""

    log_tilde_f: np.ndarray
    log_tilde_g: np.ndarray
    grid: Grid

    @property
    def tilde_f_t(self) -> Field:
        return Field(self.grid, np.exp(self.log_tilde_f))

    @property
    def tilde_g_t(self) -> Field:
        return Field(self.grid, np.exp(self.log_tilde_g))


@dataclass(frozen=True, eq=False)
class FlowSlice:
    """Time-t slice of the bridge flow.

    ``log_f`` and ``log_g`` are the unmasked log potentials, shifted by a
    common constant so that ``f_t g_t m`` integrates to one exactly (the
    removed mass is ``drift``).  They may be -inf only at t in {0, 1}.
    The velocity is set to zero where ``mu_t < mass_floor``.
    """

    t: float
    process: ReferenceProcess
    log_f: np.ndarray = field(repr=False)
    log_g: np.ndarray = field(repr=False)
    mu_t: Density = field(repr=False)
    drift: float = 0.0
    mass_floor: float = MASS_FLOOR
    log_m: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def grid(self) -> Grid:
        return self.process.grid

    @property
    def sigma(self) -> float:
        return self.process.sigma

    @cached_property
    def mask(self) -> np.ndarray:
        return self.mu_t.values >= self.mass_floor

    @property
    def log_ft(self) -> Field:
        return Field(self.grid, np.maximum(self.log_f, _LOG_FLOOR))

    @property
    def log_gt(self) -> Field:
        return Field(self.grid, np.maximum(self.log_g, _LOG_FLOOR))

    @property
    def f_t(self) -> Field:
        return Field(self.grid, np.exp(self.log_f))

    @property
    def g_t(self) -> Field:
        return Field(self.grid, np.exp(self.log_g))

    @cached_property
    def velocity_raw(self) -> np.ndarray:
        """``sigma/2 d(log g - log f)`` on the whole grid, no masking."""
        d = np.maximum(self.log_g, _LOG_FLOOR) - np.maximum(self.log_f, _LOG_FLOOR)
        return 0.5 * self.sigma * diff1(d, self.grid.h)

    @cached_property
    def v_t(self) -> Field:
        return Field(self.grid, np.where(self.mask, self.velocity_raw, 0.0))

    @property
    def m_log(self) -> np.ndarray:
        return self.process.log_m if self.log_m is None else self.log_m

    def tilde(self) -> TildeFields:
        c = self.m_log + 2.0 * self.process.U.values
        shift = -self.process.U.values + 0.5 * c
        return TildeFields(self.log_f + shift, self.log_g + shift, self.grid)


def _make_slice(t, process, lf, lg, log_m=None, mass_floor=MASS_FLOOR) -> FlowSlice:
    lm = process.log_m if log_m is None else log_m
    lmu = lf + lg + lm
    logZ = float(logsumexp(lmu, b=process.grid.weights))
    if not np.isfinite(logZ):
        raise GridError("flow slice has no mass")
    drift = math.expm1(logZ)
    lf = lf - 0.5 * logZ
    lg = lg - 0.5 * logZ
    mu = Density.from_log(process.grid, lmu - logZ)
    return FlowSlice(float(t), process, lf, lg, mu, drift, mass_floor, log_m)


def propagate(solution: SchrodingerSolution, t: float, mass_floor: float = MASS_FLOOR) -> FlowSlice:
    """Flow slice at time ``t`` by quadrature propagation of f and g."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    p = solution.problem
    proc = p.process
    strict = p.strict_kernel
    if t == 0.0:
        lf = solution.log_f
    else:
        lf = build_kernel(proc, t, strict=strict).apply_log(solution.log_f)
    if t == 1.0:
        lg = solution.log_g
    else:
        lg = build_kernel(proc, 1.0 - t, strict=strict).apply_log(solution.log_g)
    s = _make_slice(t, proc, lf, lg, mass_floor=mass_floor)
    if abs(s.drift) > 1e-6:
        log.warning("flow mass drift %.3g at t=%g", s.drift, t)
    return s


def propagate_many(solution: SchrodingerSolution, ts: Sequence[float], **kw) -> list:
    from .parallel import pmap
    return pmap(lambda t: propagate(solution, t, **kw), list(ts))


@dataclass(frozen=True)
class HeatFlowReport:
    t: float
    dt: float
    residual_f: float
    residual_g: float
    hjb_f: float
    hjb_g: float


def _l2(r, w, mu, mask):
    return float(np.sqrt(np.dot(w, np.where(mask, r * r * mu, 0.0))))


def heat_flow_check(slice_pair: Tuple[FlowSlice, FlowSlice]) -> HeatFlowReport:
    """Residuals of the Kolmogorov equations for f_t, g_t and their HJB forms.

    Time derivatives are the difference quotient across the pair; spatial
    terms are averaged over the two slices (midpoint rule).  Residuals are
    taken relative to f and g, i.e. on the log scale, in L2 of the mean flow
    density.  The common normalization shift of the slices cancels for the
    f-g product but not for each factor, so it is removed first.
    """
    s1, s2 = slice_pair
    if s2.t <= s1.t:
        raise ValueError("slices must be ordered in time")
    proc = s1.process
    dt = s2.t - s1.t
    h, sig = proc.grid.h, proc.sigma
    Us = proc.reciprocal_characteristic().U_script.values
    # undo the per-slice normalization shift: log(1 + drift) / 2 each
    c1, c2 = 0.5 * math.log1p(s1.drift), 0.5 * math.log1p(s2.drift)

    def kolm(lv):
        return proc.generator(lv) + 0.5 * sig * diff1(lv, h) ** 2

    def hjb(lv):
        return sig * (0.5 * diff2(lv, h) + 0.5 * diff1(lv, h) ** 2 - Us)

    lf1, lf2 = s1.log_f + c1, s2.log_f + c2
    lg1, lg2 = s1.log_g + c1, s2.log_g + c2
    r_f = (lf2 - lf1) / dt - 0.5 * (kolm(lf1) + kolm(lf2))
    r_g = (lg2 - lg1) / dt + 0.5 * (kolm(lg1) + kolm(lg2))
    t1, t2 = s1.tilde(), s2.tilde()
    tf1, tf2 = t1.log_tilde_f + c1, t2.log_tilde_f + c2
    tg1, tg2 = t1.log_tilde_g + c1, t2.log_tilde_g + c2
    r_hf = (tf2 - tf1) / dt - 0.5 * (hjb(tf1) + hjb(tf2))
    r_hg = (tg2 - tg1) / dt + 0.5 * (hjb(tg1) + hjb(tg2))
    mu = 0.5 * (s1.mu_t.values + s2.mu_t.values)
    mask = s1.mask & s2.mask
    w = proc.grid.weights
    return HeatFlowReport(0.5 * (s1.t + s2.t), dt, _l2(r_f, w, mu, mask), _l2(r_g, w, mu, mask),
                          _l2(r_hf, w, mu, mask), _l2(r_hg, w, mu, mask))


def continuity_residual(triple: Sequence[FlowSlice]) -> float:
    """L1 residual of ``d_t mu + d(mu v) = 0`` at the middle slice."""
    a, b, c = triple
    dmu = (c.mu_t.values - a.mu_t.values) / (c.t - a.t)
    flux = diff1(b.mu_t.values * b.velocity_raw, b.grid.h)
    return float(np.dot(b.grid.weights, np.abs(dmu + flux)))


@dataclass(frozen=True, eq=False)
class FKProblem:
    """Penalized reference ``f(X_0) exp(-int_0^1 K(X_s) ds) dP``."""

    process: ReferenceProcess
    K: Field
    log_f: np.ndarray = field(repr=False)
    n_trotter: int = 32
    trotter_check: bool = False

    @classmethod
    def from_density(cls, process, K, f: Field, **kw) -> "FKProblem":
        fv = f.values if isinstance(f, Field) else np.asarray(f, dtype=float)
        lf = f.log if isinstance(f, Density) else np.log(fv)
        return cls(process, K if isinstance(K, Field) else Field(process.grid, K), np.asarray(lf), **kw)


def fk_flow(fk_problem: FKProblem, t: float, n_trotter: Optional[int] = None,
            mass_floor: float = MASS_FLOOR) -> FlowSlice:
    """Flow slice of the penalized process at time t (renormalized, drift kept)."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    fp = fk_problem
    n = fp.n_trotter if n_trotter is None else n_trotter
    zero = np.zeros(fp.process.grid.n_points)
    lf = fp.log_f if t == 0.0 else fk_kernel(fp.process, fp.K, t, n, check=fp.trotter_check).apply_log(fp.log_f)
    lg = zero if t == 1.0 else fk_kernel(fp.process, fp.K, 1.0 - t, n, check=fp.trotter_check).apply_log(zero)
    return _make_slice(t, fp.process, lf, lg, mass_floor=mass_floor)


def bridge_mixture_density(solution: SchrodingerSolution, t: float, drop_mass: float = 1e-12,
                           stride: int = 1, chunk: int = 8192) -> np.ndarray:
    """Time-t marginal as the pi-average of exact bridge densities.

    Evaluated at every ``stride``-th grid point.  Pairs of smallest coupling
    mass are dropped up to a total of ``drop_mass``.  Only closed-form
    (Brownian or OU) references are supported.
    """
    proc = solution.process
    if proc.kind not in (OU, BROWNIAN):
        raise ValueError("bridge densities need a closed-form reference")
    if not 0 < t < 1:
        raise ValueError("t must lie in (0, 1)")
    pi = solution.coupling.ravel()
    order = np.argsort(pi)
    keep = order[np.cumsum(pi[order]) > drop_mass]
    x = proc.grid.points
    n = x.size
    i, j = np.divmod(keep, n)
    z = x[::stride]
    alpha = proc.alpha if proc.kind == OU else 0.0
    mean, var = bridge_moments(x[i], x[j], t, alpha, proc.sigma)
    var = float(var)
    norm = 1.0 / math.sqrt(2 * math.pi * var)
    out = np.zeros(z.size)
    masses = pi[keep]
    for k in range(0, keep.size, chunk):
        mk, wk = mean[k:k + chunk], masses[k:k + chunk]
        out += wk @ np.exp(-0.5 * (z[None, :] - mk[:, None]) ** 2 / var)
    return out * norm
