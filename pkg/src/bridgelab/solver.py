"""Static Schrödinger problem on a grid: log-domain Sinkhorn (IPFP)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from .grid import Density, Field, Grid, GridError
from .kernels import ReferenceProcess, TransitionKernel, build_kernel

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class SupportMismatchError(SolverError):
    def __init__(self, msg="support mismatch"):
        super().__init__(msg)


class SinkhornConvergenceError(SolverError):
    def __init__(self, last_error: float, iterations: int):
        super().__init__(f"max_iter={iterations} exceeded, last marginal error {last_error:.3e}")
        self.last_error = last_error
        self.iterations = iterations


class ConsistencyError(SolverError):
    pass


@dataclass(frozen=True, eq=False)
class SchrodingerProblem:
    process: ReferenceProcess
    mu: Density
    nu: Density
    horizon: float = 1.0
    strict_kernel: bool = True

    def __post_init__(self):
        g = self.process.grid
        if self.mu.grid != g or self.nu.grid != g:
            raise GridError("grid mismatch between marginals and process")
        if self.horizon != 1.0:
            raise ValueError("horizon is fixed to 1")
        if not self.process.improper:
            for name, d in (("mu", self.mu), ("nu", self.nu)):
                if not np.isfinite(relative_entropy(d, self.process)):
                    raise GridError(f"{name} has infinite relative entropy")

    @property
    def grid(self) -> Grid:
        return self.process.grid

    @cached_property
    def kernel(self) -> TransitionKernel:
        return build_kernel(self.process, 1.0, strict=self.strict_kernel)


def relative_entropy(mu: Density, process: ReferenceProcess) -> float:
    """``int log(mu/m) dmu`` with 0 log 0 = 0 (m Lebesgue when improper)."""
    w = mu.grid.weights
    pos = mu.values > 0
    integrand = np.zeros_like(mu.values)
    integrand[pos] = mu.values[pos] * (mu.log[pos] - process.log_m[pos])
    return float(np.dot(w, integrand))


def log_joint_reference(problem: SchrodingerProblem) -> np.ndarray:
    g = problem.grid
    lw = g.log_weights
    return (problem.process.log_m + lw)[:, None] + problem.kernel.log_values + lw[None, :]


def build_joint_reference(problem: SchrodingerProblem) -> np.ndarray:
    """``R[i, j] = m(x_i) p_1(x_i, x_j) w_i w_j`` with trapezoid weights folded in."""
    return np.exp(log_joint_reference(problem))


def _log_masses(d: Density) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(d.values > 0, d.log + d.grid.log_weights, -np.inf)


@dataclass
class _IPFPResult:
    log_a: np.ndarray
    log_b: np.ndarray
    iterations: int
    error: float
    trace: List[float]


def _lse(A, v, axis):
    if axis == 1:
        return logsumexp(A + v[None, :], axis=1)
    return logsumexp(A + v[:, None], axis=0)


def ipfp(log_R: np.ndarray, log_p: np.ndarray, log_q: np.ndarray, tol: float = 1e-10,
         max_iter: int = 100_000, init: Optional[np.ndarray] = None,
         accelerate: bool = True, history: int = 8) -> _IPFPResult:
    """Log-domain IPFP for ``pi = diag(a) R diag(b)`` with row/column masses p, q.

    Iterates on log b.  With ``accelerate`` the sweep map is extrapolated by
    type-II Anderson mixing; a candidate is kept only if it does not increase
    the L1 marginal error, otherwise the plain sweep is taken.
    """
    n, m = log_R.shape
    pos_p, pos_q = np.isfinite(log_p), np.isfinite(log_q)
    lR = log_R[np.ix_(pos_p, pos_q)]
    lp, lq = log_p[pos_p], log_q[pos_q]
    p = np.exp(lp)
    if not np.all(np.isfinite(logsumexp(lR, axis=1))) or not np.all(np.isfinite(logsumexp(lR, axis=0))):
        raise SupportMismatchError()

    def sweep(lb):
        # one full IPFP sweep; returns (new log b, log a used, error of (a, new b))
        la = lp - _lse(lR, lb, 1)
        lb_new = lq - _lse(lR, la, 0)
        rows = np.exp(la + _lse(lR, lb_new, 1))
        err = float(np.abs(rows - p).sum())
        if not (np.isfinite(err) and np.all(np.isfinite(lb_new))):
            raise SupportMismatchError()
        return lb_new, la, err

    lb = np.zeros(pos_q.sum()) if init is None else np.asarray(init, dtype=float)[pos_q].copy()
    trace: List[float] = []
    if np.any(~np.isfinite(lb)):
        lb = np.where(np.isfinite(lb), lb, 0.0)
    gval, la, err = sweep(lb)
    trace.append(err)
    it = 1
    X, G = [lb], [gval]
    x_cur, g_cur = lb, gval
    while err > tol:
        if it >= max_iter:
            raise SinkhornConvergenceError(err, it)
        cand = None
        if accelerate and len(X) >= 2:
            F = np.array(G) - np.array(X)
            dF = np.diff(F, axis=0).T
            dG = np.diff(np.array(G), axis=0).T
            coef, *_ = np.linalg.lstsq(dF, F[-1], rcond=None)
            cand = G[-1] - dG @ coef
        accepted = False
        if cand is not None and np.all(np.isfinite(cand)):
            try:
                g_new, la_new, e_new = sweep(cand)
            except SupportMismatchError:
                e_new = np.inf
            it += 1
            if e_new <= err:
                x_cur, g_cur, la, err = cand, g_new, la_new, e_new
                accepted = True
        if not accepted:
            if cand is not None:
                X, G = [x_cur], [g_cur]
            x_cur = g_cur
            g_cur, la, err = sweep(x_cur)
            it += 1
        X.append(x_cur)
        G.append(g_cur)
        if len(X) > history + 1:
            X.pop(0)
            G.pop(0)
        trace.append(err)
    # the last sweep output (g_cur, with la) is the returned pair
    log_a = np.full(n, -np.inf)
    log_b = np.full(m, -np.inf)
    log_a[pos_p] = la
    log_b[pos_q] = g_cur
    return _IPFPResult(log_a, log_b, it, err, trace)


@dataclass(frozen=True, eq=False)
class SchrodingerSolution:
    """Converged Schrödinger potentials.

    ``pi[i, j] = exp(log_f[i] + log_R[i, j] + log_g[j])``.  Potentials are
    kept in log form; ``f`` and ``g`` exponentiate on demand.  The gauge is
    fixed by ``int log f dmu = int log g dnu``.
    """

    problem: SchrodingerProblem
    log_f: np.ndarray = field(repr=False)
    log_g: np.ndarray = field(repr=False)
    log_R: np.ndarray = field(repr=False)
    iterations: int
    final_marginal_error: float
    trace: Tuple[float, ...] = field(repr=False)
    cost: float = float("nan")
    cost_split: float = float("nan")

    @property
    def process(self) -> ReferenceProcess:
        return self.problem.process

    @property
    def improper(self) -> bool:
        return self.process.improper

    @property
    def f(self) -> Field:
        return Field(self.problem.grid, np.exp(self.log_f))

    @property
    def g(self) -> Field:
        return Field(self.problem.grid, np.exp(self.log_g))

    @property
    def marginal_errors(self) -> Tuple[float, float]:
        pi, w = self.coupling, self.problem.grid.weights
        return (float(np.abs(pi.sum(axis=1) - w * self.problem.mu.values).sum()),
                float(np.abs(pi.sum(axis=0) - w * self.problem.nu.values).sum()))

    @cached_property
    def log_coupling(self) -> np.ndarray:
        return self.log_f[:, None] + self.log_R + self.log_g[None, :]

    @cached_property
    def coupling(self) -> np.ndarray:
        return np.exp(self.log_coupling)

    def swapped(self) -> "SchrodingerSolution":
        p = SchrodingerProblem(self.problem.process, self.problem.nu, self.problem.mu,
                               strict_kernel=self.problem.strict_kernel)
        return SchrodingerSolution(p, self.log_g, self.log_f, self.log_R.T, self.iterations,
                                   self.final_marginal_error, self.trace, self.cost, self.cost_split)


def _wdot(weights, log_vals) -> float:
    # sum of weights * log values, skipping zero-weight entries (0 * -inf = 0)
    pos = weights > 0
    return float(np.dot(weights[pos], log_vals[pos]))


def _fix_gauge(problem, lf, lg):
    w = problem.grid.weights
    c = 0.5 * (_wdot(w * problem.nu.values, lg) - _wdot(w * problem.mu.values, lf))
    return lf + c, lg - c


def sinkhorn(problem: SchrodingerProblem, tol: float = 1e-10, max_iter: int = 100_000,
             init: Optional[np.ndarray] = None, accelerate: bool = True) -> SchrodingerSolution:
    """Solve the Schrödinger system to L1 marginal error ``tol``.

    ``init`` is an optional log g warm start, e.g. from a nearby problem.
    Where mu (nu) vanishes, log f (log g) is -inf.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    lR = log_joint_reference(problem)
    lp, lq = _log_masses(problem.mu), _log_masses(problem.nu)
    res = ipfp(lR, lp, lq, tol=tol, max_iter=max_iter, init=init, accelerate=accelerate)
    # with the weights inside log_R the scalings are the potentials themselves
    lf, lg = _fix_gauge(problem, res.log_a, res.log_b)
    sol = SchrodingerSolution(problem, lf, lg, lR, res.iterations, res.error, tuple(res.trace))
    cost, split = _cost_pair(sol)
    scale = _log_scale(sol)
    if abs(cost - split) > 1e-8 + 10 * res.error * scale:
        raise ConsistencyError(f"cost {cost!r} and potential split {split!r} disagree")
    log.debug("sinkhorn: %d iterations, error %.3e, cost %.12g", res.iterations, res.error, cost)
    object.__setattr__(sol, "cost", cost)
    object.__setattr__(sol, "cost_split", split)
    return sol


def _log_scale(sol) -> float:
    p = sol.problem
    return 1.0 + float(np.max(np.abs(sol.log_f[p.mu.values > 0])) + np.max(np.abs(sol.log_g[p.nu.values > 0])))


def _cost_pair(sol: SchrodingerSolution) -> Tuple[float, float]:
    lpi = sol.log_coupling
    pi = np.exp(lpi)
    pos = pi > 0
    direct = float(np.sum(pi[pos] * (lpi[pos] - sol.log_R[pos])))
    w = sol.problem.grid.weights
    mu, nu = sol.problem.mu.values, sol.problem.nu.values
    split = _wdot(w * mu, sol.log_f) + _wdot(w * nu, sol.log_g)
    return direct, split


def entropic_cost(solution: SchrodingerSolution) -> float:
    """``sum pi log(pi / R)``; verified against ``int log f dmu + int log g dnu``."""
    direct, split = _cost_pair(solution)
    scale = _log_scale(solution)
    if abs(direct - split) > 1e-8 + 10 * solution.final_marginal_error * scale:
        raise ConsistencyError(f"cost {direct!r} and potential split {split!r} disagree")
    return direct


def sweep_once(solution: SchrodingerSolution) -> Tuple[np.ndarray, np.ndarray]:
    """One more plain IPFP sweep from the solution (fixpoint check), gauge fixed."""
    p = solution.problem
    lp, lq = _log_masses(p.mu), _log_masses(p.nu)
    lR = solution.log_R
    lg = np.where(np.isfinite(lq), solution.log_g, -np.inf)
    la = lp - _lse(lR, lg, 1)
    lb = lq - _lse(lR, la, 0)
    return _fix_gauge(p, la, lb)
