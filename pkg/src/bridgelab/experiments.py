"""Studies tying the pieces together: hot gas, small noise, Fisher convexity, Feynman-Kac."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .diagnostics import (entropy, fisher_convexity_check, ode_residual, FisherConvexityReport)
from .flow import FKProblem, FlowSlice, bridge_mixture_density, fk_flow, propagate
from .grid import Density, Field, Grid, diff1, diff2
from .kernels import OU, ReferenceProcess, bridge_moments
from .parallel import pmap
from .solver import SchrodingerProblem, SchrodingerSolution, sinkhorn
from .transport import geodesic_quantiles, w1_empirical, w1_to_quantiles, w2_squared
from . import marginals

log = logging.getLogger(__name__)


def triple(get, t: float, dt: float) -> List[FlowSlice]:
    return [get(t - dt), get(t), get(t + dt)]


# ---------------------------------------------------------------- hot gas

@dataclass
class HotGasRun:
    n_particles: Tuple[int, ...]
    t_samples: Tuple[float, ...]
    seed: int
    n_replicates: int
    distances: np.ndarray            # (len(N), len(t), replicates) W1 to mu_t
    empirical_densities: Dict[Tuple[int, float], np.ndarray]
    bin_edges: np.ndarray
    mixture_errors: Dict[float, float]
    small_sample_warning: bool

    @property
    def median_distances(self) -> np.ndarray:
        return np.median(self.distances.reshape(self.distances.shape[0], -1), axis=1)

    @property
    def slope(self) -> float:
        """Least-squares slope of log median W1 against log N."""
        return float(np.polyfit(np.log(self.n_particles), np.log(self.median_distances), 1)[0])


def _pair_sampler(solution: SchrodingerSolution):
    pi = solution.coupling.ravel()
    cdf = np.cumsum(pi)
    cdf /= cdf[-1]
    n = solution.problem.grid.n_points
    x = solution.problem.grid.points

    def draw(rng, N):
        k = np.minimum(np.searchsorted(cdf, rng.random(N), side="right"), pi.size - 1)
        i, j = np.divmod(k, n)
        return x[i], x[j]
    return draw


def hot_gas(solution: SchrodingerSolution, n_particles: Sequence[int] = (100, 1000, 10000),
            t_samples: Sequence[float] = (0.25, 0.5, 0.75), seed: int = 0,
            n_replicates: int = 16, mixture_check: bool = True, mixture_stride: int = 4) -> HotGasRun:
    """Simulate N bridges with endpoints drawn from the optimal coupling.

    Each particle's position at each t is an independent draw from its
    bridge marginal (only one-time marginals are compared).  Replicate r of
    size N uses the stream ``SeedSequence(seed, spawn_key=(N, r))``.
    """
    proc = solution.process
    if proc.kind not in ("ou", "brownian"):
        raise ValueError("hot gas needs a closed-form bridge")
    alpha = proc.alpha if proc.kind == OU else 0.0
    draw = _pair_sampler(solution)
    ts = tuple(float(t) for t in t_samples)
    Ns = tuple(int(n) for n in n_particles)
    flows = {t: propagate(solution, t) for t in ts}
    g = solution.problem.grid
    edges = np.concatenate([[g.lower - 0.5 * g.h], 0.5 * (g.points[1:] + g.points[:-1]), [g.upper + 0.5 * g.h]])
    dist = np.zeros((len(Ns), len(ts), n_replicates))
    hists = {}
    for a, N in enumerate(Ns):
        for r in range(n_replicates):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(N, r)))
            x0, x1 = draw(rng, N)
            for b, t in enumerate(ts):
                mean, var = bridge_moments(x0, x1, t, alpha, proc.sigma)
                pos = mean + math.sqrt(float(var)) * rng.standard_normal(N)
                dist[a, b, r] = w1_empirical(pos, flows[t].mu_t)
                if r == 0:
                    hists[(N, t)] = np.histogram(pos, bins=edges, density=True)[0]
    mix = {}
    if mixture_check:
        for t in ts:
            dens = bridge_mixture_density(solution, t, stride=mixture_stride)
            mix[t] = float(np.max(np.abs(dens - flows[t].mu_t.values[::mixture_stride])))
    return HotGasRun(Ns, ts, seed, n_replicates, dist, hists, edges, mix, min(Ns) < 100)


# ---------------------------------------------------------------- small noise

@dataclass
class SmallNoiseSweep:
    epsilons: Tuple[float, ...]
    family: str
    costs: np.ndarray
    scaled_costs: np.ndarray
    iterations: Tuple[int, ...]
    w2_half_sq: float
    t_samples: Tuple[float, ...]
    geodesic_distances: np.ndarray   # (len(eps), len(t)) W1(mu^eps_t, mu^0_t)
    endpoint_errors: np.ndarray      # (len(eps),) W1(mu^eps_0, mu)
    discretization_floor: float      # W1 of the quantile machinery at t = 0
    entropy_mu: float = float("nan")
    talagrand: List[Tuple[float, float, float]] = field(default_factory=list)  # (eps, lower, upper margin)

    @property
    def relative_errors(self) -> np.ndarray:
        return np.abs(self.scaled_costs - self.w2_half_sq) / self.w2_half_sq if self.w2_half_sq else self.scaled_costs

    def rows(self):
        for k, e in enumerate(self.epsilons):
            yield [e, self.costs[k], self.scaled_costs[k], self.w2_half_sq, self.iterations[k],
                   *self.geodesic_distances[k]]


DEFAULT_EPSILONS = (1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01)


def small_noise_sweep(mu: Density, nu: Optional[Density], epsilons: Sequence[float] = DEFAULT_EPSILONS,
                      process_family: str = "brownian", alpha: float = 1.0,
                      t_samples: Sequence[float] = (0.5,), lam: Optional[float] = None,
                      tol: float = 1e-10) -> SmallNoiseSweep:
    """Warm-started solves down a decreasing noise ladder.

    ``process_family`` is "brownian" (the W2 limit) or "ou" (Talagrand
    variant; ``nu=None`` then means the stationary law).
    """
    eps = tuple(float(e) for e in epsilons)
    if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be positive and strictly decreasing")
    grid = mu.grid
    if process_family == "brownian":
        make = lambda e: ReferenceProcess.brownian(grid, e)  # noqa: E731
    elif process_family == "ou":
        make = lambda e: ReferenceProcess.ou(grid, alpha, e)  # noqa: E731
    else:
        raise ValueError(f"unknown process family {process_family!r}")
    if nu is None:
        if process_family != "ou":
            raise ValueError("a stationary target needs the OU family")
        nu = Density.from_log(grid, make(1.0).log_m)
    ts = tuple(float(t) for t in t_samples)
    q0 = {t: geodesic_quantiles(mu, nu, t) for t in ts}
    w2h = 0.5 * w2_squared(mu, nu)
    floor = w1_to_quantiles(mu, geodesic_quantiles(mu, nu, 0.0))
    costs, its, gd, ends, tal = [], [], [], [], []
    Hmu = entropy(mu, make(1.0)) if process_family == "ou" else float("nan")
    init = None
    for e in eps:
        proc = make(e)
        sol = sinkhorn(SchrodingerProblem(proc, mu, nu), tol=tol, init=init)
        init = sol.log_g
        costs.append(sol.cost)
        its.append(sol.iterations)
        gd.append([w1_to_quantiles(propagate(sol, t).mu_t, q0[t]) for t in ts])
        ends.append(w1_to_quantiles(propagate(sol, 0.0).mu_t, geodesic_quantiles(mu, nu, 0.0)))
        if process_family == "ou" and lam is not None:
            tal.append((e, sol.cost - Hmu, Hmu / -math.expm1(-lam * e) - sol.cost))
        log.info("eps=%g: cost %.10g, %d iterations", e, sol.cost, sol.iterations)
    costs = np.array(costs)
    return SmallNoiseSweep(eps, process_family, costs, np.array(eps) * costs, tuple(its), w2h, ts,
                           np.array(gd), np.array(ends), floor, Hmu, tal)


# ---------------------------------------------------------------- Fisher convexity

def _pi_log_density(solution: SchrodingerSolution) -> np.ndarray:
    lw = solution.problem.grid.log_weights
    return solution.log_coupling - lw[:, None] - lw[None, :]


@dataclass
class LogConcavity:
    passed: bool
    max_axis: float
    max_diag: float
    min_det: float


def coupling_log_concavity(solution: SchrodingerSolution, tol: float = 1e-6, floor: float = 1e-12,
                           stride: int = 1) -> LogConcavity:
    """Necessary conditions for log-concavity of the coupling density.

    Second differences of log pi along both axes and the diagonal must be
    <= tol, and the 2x2 finite-difference Hessian determinant >= -tol, at
    every (strided) interior point where pi exceeds ``floor`` times its max.
    """
    psi = _pi_log_density(solution)
    h = solution.problem.grid.h
    pi_rel = np.exp(psi - psi.max())
    c = psi[1:-1, 1:-1]
    hxx = (psi[2:, 1:-1] - 2 * c + psi[:-2, 1:-1]) / h ** 2
    hyy = (psi[1:-1, 2:] - 2 * c + psi[1:-1, :-2]) / h ** 2
    hdd = (psi[2:, 2:] - 2 * c + psi[:-2, :-2]) / (2 * h ** 2)
    hxy = (psi[2:, 2:] - psi[2:, :-2] - psi[:-2, 2:] + psi[:-2, :-2]) / (4 * h ** 2)
    sel = (pi_rel[1:-1, 1:-1] >= floor)
    if stride > 1:
        sub = np.zeros_like(sel)
        sub[::stride, ::stride] = True
        sel &= sub
    det = hxx * hyy - hxy ** 2
    max_axis = float(max(hxx[sel].max(), hyy[sel].max()))
    max_diag = float(hdd[sel].max())
    min_det = float(det[sel].min())
    scale = 1.0 + float(np.max(np.abs(hxx[sel])))
    ok = max_axis <= tol * scale and max_diag <= tol * scale and min_det >= -tol * scale ** 2
    return LogConcavity(ok, max_axis, max_diag, min_det)


def density_log_concavity(mu: Density, tol: float = 1e-6, floor: float = 1e-12) -> Tuple[bool, float]:
    """Max of the second difference of log mu over points with mu >= floor * max."""
    d2 = diff2(mu.log, mu.grid.h)[1:-1]
    sel = (mu.values >= floor * mu.values.max())[1:-1]
    worst = float(d2[sel].max())
    return worst <= tol * (1.0 + float(np.max(np.abs(d2[sel])))), worst


@dataclass
class FisherStudyRow:
    alpha: float
    instance: str
    pi_logconcave: bool
    mu_t_logconcave: bool
    asserted: bool
    holds: Optional[bool]
    convex: Optional[bool]
    min_margin: float
    report: Optional[FisherConvexityReport] = None


def fisher_convexity_study(alpha_list: Sequence[float], marginal_specs: Sequence[dict], grid: Grid,
                           t_samples: Sequence[float] = tuple(np.linspace(0.1, 0.9, 9)),
                           dt: float = 1e-3, rel_slack: float = 0.05) -> List[FisherStudyRow]:
    """Run the Fisher convexity check over OU strengths (0 means Brownian) and marginal pairs.

    ``marginal_specs`` entries: ``{"name": str, "mu": spec, "nu": spec}``.
    The bound is only asserted when both log-concavity flags pass.
    """
    rows = []
    for alpha in alpha_list:
        proc = ReferenceProcess.ou(grid, alpha) if alpha > 0 else ReferenceProcess.brownian(grid)
        rc = proc.reciprocal_characteristic()
        a2 = max(rc.alpha_sq, 0.0)
        for spec in marginal_specs:
            mu = marginals.from_spec(grid, spec["mu"])
            nu = marginals.from_spec(grid, spec["nu"])
            sol = sinkhorn(SchrodingerProblem(proc, mu, nu))
            lc = coupling_log_concavity(sol)
            trips = pmap(lambda t: triple(lambda s: propagate(sol, s), t, dt), list(t_samples))
            mu_ok = all(density_log_concavity(tr[1].mu_t)[0] for tr in trips)
            rep = fisher_convexity_check(trips, a2, proc, rel_slack=rel_slack)
            asserted = lc.passed and mu_ok
            margin = min(r.dtt_fisher - r.rhs + rel_slack * (r.rhs + 1.0) for r in rep.rows)
            rows.append(FisherStudyRow(alpha, spec.get("name", "instance"), lc.passed, mu_ok, asserted,
                                       rep.holds if asserted else None, rep.convex if asserted else None,
                                       margin, rep))
    return rows


# ---------------------------------------------------------------- Feynman-Kac

@dataclass
class FKLevel:
    n_points: int
    dt: float
    n_trotter: int


@dataclass
class FKReport:
    levels: List[FKLevel]
    t_samples: Tuple[float, ...]
    residuals: np.ndarray               # (levels, t)
    orders: np.ndarray                  # (levels - 1, t) in h
    constant_shift_velocity: float      # max |v(K + c) - v(K)|
    constant_shift_residual: float      # max |res(K + c) - res(K)|
    hjb_residuals: np.ndarray           # (levels, t)


DEFAULT_FK_LEVELS = (FKLevel(401, 2e-3, 16), FKLevel(801, 1e-3, 32))


def _fk_hjb_residual(trip: Sequence[FlowSlice], K: np.ndarray) -> float:
    # d_t log g + sigma (d2 log g + |d log g|^2)/2 - K = 0 at the middle slice
    a, b, c = trip
    sig, h = b.sigma, b.grid.h
    ca, cc = 0.5 * math.log1p(a.drift), 0.5 * math.log1p(c.drift)
    cb = 0.5 * math.log1p(b.drift)
    lg = b.log_g + cb
    r = ((c.log_g + cc) - (a.log_g + ca)) / (c.t - a.t) + 0.5 * sig * (diff2(lg, h) + diff1(lg, h) ** 2) - K
    w, mu = b.grid.weights, b.mu_t.values
    return float(np.sqrt(np.dot(w, np.where(b.mask, r * r * mu, 0.0))))


def fk_verification(K_spec, f_spec: dict, t_samples: Sequence[float] = (0.25, 0.5, 0.75),
                    levels: Sequence[FKLevel] = DEFAULT_FK_LEVELS, lower: float = -6.0,
                    upper: float = 6.0, sigma: float = 1.0, shift: float = 1.0) -> FKReport:
    """Residual of the penalized second-order equation under joint refinement.

    ``K_spec`` is a callable of x (or a constant); ``f_spec`` a marginal
    spec used as the initial weight f.  The constant-shift check re-runs the
    finest level with ``K + shift``.
    """
    Kfun = K_spec if callable(K_spec) else (lambda x, c=float(K_spec): np.full_like(x, c))
    ts = tuple(float(t) for t in t_samples)
    res = np.zeros((len(levels), len(ts)))
    hjb = np.zeros_like(res)
    hs = []
    dv = dres = 0.0
    for a, lev in enumerate(levels):
        grid = Grid(lower, upper, lev.n_points)
        proc = ReferenceProcess.brownian(grid, sigma)
        Kv = Kfun(grid.points)
        f = marginals.from_spec(grid, f_spec)
        fk = FKProblem(proc, Field(grid, Kv), f.log, lev.n_trotter)
        hs.append(grid.h)
        for b, t in enumerate(ts):
            trip = triple(lambda s: fk_flow(fk, s), t, lev.dt)
            res[a, b] = ode_residual(trip, proc, K=Kv).value
            hjb[a, b] = _fk_hjb_residual(trip, Kv)
            if a == len(levels) - 1:
                fk2 = FKProblem(proc, Field(grid, Kv + shift), f.log, lev.n_trotter)
                trip2 = triple(lambda s: fk_flow(fk2, s), t, lev.dt)
                dv = max(dv, float(np.max(np.abs(trip2[1].v_t.values - trip[1].v_t.values))))
                dres = max(dres, abs(ode_residual(trip2, proc, K=Kv + shift).value - res[a, b]))
    hs = np.array(hs)
    orders = np.log(res[:-1] / res[1:]) / np.log(hs[:-1] / hs[1:])[:, None] if len(levels) > 1 else np.zeros((0, len(ts)))
    return FKReport(list(levels), ts, res, orders, dv, dres, hjb)
