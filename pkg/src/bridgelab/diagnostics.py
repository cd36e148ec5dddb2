"""Wasserstein-calculus functionals along a bridge flow and checks of their identities.

Conventions: the reference generator is ``L = sigma (d2/2 - U' d)`` and the
entropy is taken relative to the normalized stationary density m, so that
``H(m) = 0``.  Spatial derivatives act on unmasked log fields; masking
(mu < mass_floor) only enters the integrals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .flow import FlowSlice
from .grid import MASS_FLOOR, Density, Field, GridError, diff1, diff2
from .kernels import BROWNIAN, OU, ReferenceProcess
from .solver import SchrodingerSolution, relative_entropy


def _vals(f):
    return f.values if isinstance(f, Field) else np.asarray(f, dtype=float)


def _int(w, integrand, mu, mask):
    return float(np.dot(w, np.where(mask, integrand * mu, 0.0)))


def entropy(mu: Density, process: ReferenceProcess) -> float:
    """Relative entropy of mu with respect to m, ``int (log mu + 2U) dmu`` up to log Z."""
    return relative_entropy(mu, process)


def score(mu: Density, process: ReferenceProcess) -> np.ndarray:
    """``d(log mu + 2U)``, the Wasserstein gradient of the entropy."""
    return diff1(mu.log, mu.grid.h) + 2.0 * process.dU


def fisher_information(mu: Density, process: ReferenceProcess, mass_floor: float = MASS_FLOOR) -> float:
    s = score(mu, process)
    return _int(mu.grid.weights, s * s, mu.values, mu.mask(mass_floor))


def fisher_gradient(mu: Density, process: ReferenceProcess, mass_floor: float = MASS_FLOOR) -> Field:
    """``d(-|d log mu|^2 - 2 d2 log mu + 8 U_script)``, zero on masked points."""
    h = mu.grid.h
    lm = mu.log
    us = process.reciprocal_characteristic().U_script.values
    phi = -diff1(lm, h) ** 2 - 2.0 * diff2(lm, h) + 8.0 * us
    return Field(mu.grid, np.where(mu.mask(mass_floor), diff1(phi, h), 0.0))


def _triple(slices: Sequence[FlowSlice]) -> Tuple[FlowSlice, FlowSlice, FlowSlice]:
    if len(slices) < 3:
        raise ValueError("need three slices (t - dt, t, t + dt)")
    if len(slices) > 3:
        k = len(slices) // 2
        slices = slices[k - 1:k + 2]
    a, b, c = slices
    if not a.t < b.t < c.t:
        raise ValueError("slices must be strictly increasing in t")
    return a, b, c


def _dt_weights(a, b, c):
    # centered first and second derivative weights on a possibly uneven triple
    h1, h2 = b.t - a.t, c.t - b.t
    d1 = (-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2)))
    d2 = (2 / (h1 * (h1 + h2)), -2 / (h1 * h2), 2 / (h2 * (h1 + h2)))
    return d1, d2


def acceleration(slices: Sequence[FlowSlice]) -> Field:
    """Covariant acceleration ``d_t v + d(|v|^2)/2`` at the middle slice."""
    a, b, c = _triple(slices)
    d1, _ = _dt_weights(a, b, c)
    dv = d1[0] * a.velocity_raw + d1[1] * b.velocity_raw + d1[2] * c.velocity_raw
    acc = dv + 0.5 * diff1(b.velocity_raw ** 2, b.grid.h)
    return Field(b.grid, np.where(b.mask, acc, 0.0))


@dataclass(frozen=True)
class OdeResidual:
    value: float
    t: float
    h: float
    dt: float
    reference_norm: float


def ode_residual(slices: Sequence[FlowSlice], process: Optional[ReferenceProcess] = None,
                 K=None) -> OdeResidual:
    """L2(mu_t) norm of ``acceleration - sigma^2/8 fisher_gradient - sigma dK``.

    ``K`` is the Feynman-Kac potential (omit for plain bridges).
    """
    a, b, c = _triple(slices)
    proc = b.process if process is None else process
    acc = acceleration((a, b, c)).values
    target = proc.sigma ** 2 / 8.0 * fisher_gradient(b.mu_t, proc, b.mass_floor).values
    if K is not None:
        target = target + proc.sigma * diff1(_vals(K), b.grid.h)
    r = np.where(b.mask, acc - target, 0.0)
    w, mu = b.grid.weights, b.mu_t.values
    return OdeResidual(math.sqrt(_int(w, r * r, mu, b.mask)), b.t, b.grid.h, 0.5 * (c.t - a.t),
                       math.sqrt(_int(w, target * target, mu, b.mask)))


def conservation_constant(slice_: FlowSlice, process: Optional[ReferenceProcess] = None) -> Tuple[float, float]:
    """``|v|^2/sigma^2 - I/4`` and ``-int (d log f~ d log g~ + 2 U_script) dmu``."""
    s = slice_
    proc = s.process if process is None else process
    w, mu, mask = s.grid.weights, s.mu_t.values, s.mask
    v = s.velocity_raw
    c = _int(w, v * v, mu, mask) / proc.sigma ** 2 - 0.25 * fisher_information(s.mu_t, proc, s.mass_floor)
    tf = s.tilde()
    h = s.grid.h
    us = proc.reciprocal_characteristic().U_script.values
    c_alt = -_int(w, diff1(tf.log_tilde_f, h) * diff1(tf.log_tilde_g, h) + 2.0 * us, mu, mask)
    return c, c_alt


def gamma(f, g, process: ReferenceProcess) -> Field:
    """Carré du champ ``(L(fg) - f Lg - g Lf)/2`` with the discrete generator."""
    fv, gv = _vals(f), _vals(g)
    L = process.generator
    return Field(process.grid, 0.5 * (L(fv * gv) - fv * L(gv) - gv * L(fv)))


def gamma2(f, g, process: ReferenceProcess) -> Field:
    """Iterated carré du champ ``(L Gamma(f,g) - Gamma(Lf, g) - Gamma(f, Lg))/2``."""
    fv, gv = _vals(f), _vals(g)
    L = process.generator
    G = lambda a, b: gamma(a, b, process).values  # noqa: E731
    return Field(process.grid, 0.5 * (L(G(fv, gv)) - G(L(fv), gv) - G(fv, L(gv))))


def entropy_terms(s: FlowSlice) -> Tuple[float, float, float]:
    """``(h_f, h_b, H)`` with ``h_f = int log f_t dmu_t``, ``h_b = int log g_t dmu_t``."""
    w, mu, mask = s.grid.weights, s.mu_t.values, s.mu_t.values > 0
    hf = _int(w, np.where(mask, s.log_f, 0.0), mu, mask)
    hb = _int(w, np.where(mask, s.log_g, 0.0), mu, mask)
    return hf, hb, hf + hb


@dataclass
class EntropyDerivativeReport:
    t: float
    h_f: float
    h_b: float
    entropy: float
    dt_h_f: float
    dt_h_b: float
    gamma_dt_h_f: float
    gamma_dt_h_b: float
    velocity_dt_h_f: float
    velocity_dt_h_b: float
    dtt_h_f: float
    dtt_h_b: float
    gamma2_dtt_h_f: float
    gamma2_dtt_h_b: float
    lam: Optional[float] = None
    margin_f: Optional[float] = None
    margin_b: Optional[float] = None

    @property
    def discrepancies(self) -> Dict[str, float]:
        return {
            "gamma1_f": abs(self.dt_h_f - self.gamma_dt_h_f),
            "gamma1_b": abs(self.dt_h_b - self.gamma_dt_h_b),
            "velocity_f": abs(self.dt_h_f - self.velocity_dt_h_f),
            "velocity_b": abs(self.dt_h_b - self.velocity_dt_h_b),
            "gamma2_f": abs(self.dtt_h_f - self.gamma2_dtt_h_f),
            "gamma2_b": abs(self.dtt_h_b - self.gamma2_dtt_h_b),
        }


def entropy_derivative_checks(slices: Sequence[FlowSlice], process: Optional[ReferenceProcess] = None,
                              lam: Optional[float] = None) -> EntropyDerivativeReport:
    """Finite-difference derivatives of h_f, h_b against their Gamma and velocity forms.

    With ``lam`` also reports the margins of ``h_f'' + lam sigma h_f' >= 0``
    and ``h_b'' - lam sigma h_b' >= 0``.
    """
    a, b, c = _triple(slices)
    proc = b.process if process is None else process
    d1, d2 = _dt_weights(a, b, c)
    ea, eb, ec = entropy_terms(a), entropy_terms(b), entropy_terms(c)
    dhf = d1[0] * ea[0] + d1[1] * eb[0] + d1[2] * ec[0]
    dhb = d1[0] * ea[1] + d1[1] * eb[1] + d1[2] * ec[1]
    ddhf = d2[0] * ea[0] + d2[1] * eb[0] + d2[2] * ec[0]
    ddhb = d2[0] * ea[1] + d2[1] * eb[1] + d2[2] * ec[1]
    w, mu, mask = b.grid.weights, b.mu_t.values, b.mask
    lf, lg = b.log_ft.values, b.log_gt.values
    g_f = -_int(w, gamma(lf, lf, proc).values, mu, mask)
    g_b = _int(w, gamma(lg, lg, proc).values, mu, mask)
    sig = proc.sigma
    gradH = score(b.mu_t, proc)
    v = b.velocity_raw
    vf = -_int(w, (v - 0.5 * sig * gradH) ** 2, mu, mask) / (2 * sig)
    vb = _int(w, (v + 0.5 * sig * gradH) ** 2, mu, mask) / (2 * sig)
    g2f = 2.0 * _int(w, gamma2(lf, lf, proc).values, mu, mask)
    g2b = 2.0 * _int(w, gamma2(lg, lg, proc).values, mu, mask)
    rep = EntropyDerivativeReport(b.t, eb[0], eb[1], eb[2], dhf, dhb, g_f, g_b, vf, vb,
                                  ddhf, ddhb, g2f, g2b)
    if lam is not None:
        rep.lam = lam
        rep.margin_f = ddhf + lam * sig * dhf
        rep.margin_b = ddhb - lam * sig * dhb
    return rep


def entropy_bound_rhs(t, lam: float, sigma: float, H_mu: float, H_nu: float, cost: float):
    """Upper bound on the entropy of the bridge marginal at time t under curvature lam."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    t = np.asarray(t, dtype=float)
    a = sigma * lam
    den = -math.expm1(-a)
    w0 = -np.expm1(-a * (1.0 - t)) / den
    w1 = -np.expm1(-a * t) / den
    # (cosh(a/2) - cosh(a(t - 1/2))) / sinh(a/2), written to avoid cancellation
    # at the endpoints: 2 sinh(a t/2) sinh(a (1-t)/2) / sinh(a/2)
    cc = 2.0 * np.sinh(0.5 * a * t) * np.sinh(0.5 * a * (1.0 - t)) / math.sinh(0.5 * a)
    out = w0 * H_mu + w1 * H_nu - cc * cost
    return float(out) if out.ndim == 0 else out


def sensitivity_bound(lam: float, sigma: float, H_mu: float, H_nu: float) -> float:
    """Cost upper bound ``(H_mu + H_nu) / (1 - exp(-sigma lam / 2))``."""
    return (H_mu + H_nu) / -math.expm1(-0.5 * sigma * lam)


@dataclass(frozen=True)
class CurvatureSpec:
    lam: float

    @staticmethod
    def bakry_emery(process: ReferenceProcess) -> "CurvatureSpec":
        """Best constant in ``Ric + 2 U'' >= lam`` on the grid (0 for Brownian)."""
        if process.kind == BROWNIAN:
            return CurvatureSpec(0.0)
        if process.kind == OU:
            return CurvatureSpec(2.0 * process.alpha)
        return CurvatureSpec(float(2.0 * np.min(process.d2U[1:-1])))


@dataclass
class BoundVerdict:
    lam: float
    ts: np.ndarray
    entropies: np.ndarray
    rhs: np.ndarray
    holds: bool
    violations: List[Tuple[float, float]]
    cost: float
    H_mu: float
    H_nu: float
    sensitivity_margin: float
    talagrand_margins: Optional[Tuple[float, float]] = None

    @property
    def margins(self) -> np.ndarray:
        return self.rhs - self.entropies

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margins))


def is_stationary_target(nu: Density, process: ReferenceProcess, tol: float = 1e-8) -> bool:
    if process.improper:
        return False
    return float(np.dot(nu.grid.weights, np.abs(nu.values - process.m))) <= tol


def bound_verification(solution: SchrodingerSolution, flow: Sequence[FlowSlice], lam: float,
                       report_series: Optional[Sequence[float]] = None,
                       slack: float = 1e-8) -> BoundVerdict:
    """Check the entropy bound at every slice plus the cost bounds.

    ``report_series`` may supply precomputed entropies for the slices.
    The Talagrand-type sandwich is checked when nu equals m.
    """
    proc = solution.process
    p = solution.problem
    Hmu, Hnu = entropy(p.mu, proc), entropy(p.nu, proc)
    T = solution.cost
    ts = np.array([s.t for s in flow])
    ent = (np.array(report_series, dtype=float) if report_series is not None
           else np.array([entropy(s.mu_t, proc) for s in flow]))
    rhs = np.asarray(entropy_bound_rhs(ts, lam, proc.sigma, Hmu, Hnu, T), dtype=float)
    bad = [(float(t), float(e - r)) for t, e, r in zip(ts, ent, rhs) if e > r + slack]
    sens = sensitivity_bound(lam, proc.sigma, Hmu, Hnu) - T
    tal = None
    if is_stationary_target(p.nu, proc):
        tal = (T - Hmu, Hmu / -math.expm1(-proc.sigma * lam) - T)
    holds = not bad and sens >= -slack and (tal is None or min(tal) >= -slack)
    return BoundVerdict(lam, ts, ent, rhs, holds, bad, T, Hmu, Hnu, sens, tal)


DEFAULT_LAMBDAS = tuple(round(0.1 * k, 1) for k in range(1, 26))


def max_admissible_lambda(solution: SchrodingerSolution, flow: Sequence[FlowSlice],
                          lambdas: Sequence[float] = DEFAULT_LAMBDAS, slack: float = 1e-8):
    """Largest lam in ``lambdas`` for which the entropy bound holds at all slices."""
    ent = [entropy(s.mu_t, solution.process) for s in flow]
    table = []
    best = None
    for lam in lambdas:
        v = bound_verification(solution, flow, lam, report_series=ent, slack=slack)
        ok = not v.violations
        table.append((lam, ok, v.min_margin))
        if ok:
            best = lam if best is None else max(best, lam)
    return best, table


@dataclass
class FisherRow:
    t: float
    fisher: float
    dtt_fisher: float
    rhs: float
    margin: float
    bracket: Tuple[float, float, float]
    grad_norm_sq: float
    inner_identity_residual: float
    claim_identity_residual: float


def fisher_terms(triple: Sequence[FlowSlice], process: Optional[ReferenceProcess] = None,
                 alpha_sq: float = 0.0) -> FisherRow:
    a, b, c = _triple(triple)
    proc = b.process if process is None else process
    d1, d2 = _dt_weights(a, b, c)
    Is = [fisher_information(s.mu_t, proc, s.mass_floor) for s in (a, b, c)]
    dtt = d2[0] * Is[0] + d2[1] * Is[1] + d2[2] * Is[2]
    w, mu, mask, h = b.grid.weights, b.mu_t.values, b.mask, b.grid.h
    v = b.velocity_raw
    gI = fisher_gradient(b.mu_t, proc, b.mass_floor).values
    v2 = _int(w, v * v, mu, mask)
    gI2 = _int(w, gI * gI, mu, mask)
    sig2 = proc.sigma ** 2
    rhs = 8.0 * alpha_sq * v2 + sig2 / 8.0 * gI2
    # bracket terms of <D/dt grad I, v> in 1D
    lm = b.mu_t.log
    dl, ddl = diff1(lm, h), diff2(lm, h)
    dv, ddv = diff1(v, h), diff2(v, h)
    us2 = diff2(proc.reciprocal_characteristic().U_script.values, h)
    t1 = 2.0 * _int(w, (dv * dl + ddv) ** 2, mu, mask)
    t2 = -4.0 * _int(w, dv * dv * ddl, mu, mask)
    t3 = 8.0 * _int(w, us2 * v * v, mu, mask)
    bracket = t1 + t2 + t3
    # d/dt <grad I, v> = <D/dt grad I, v> + <grad I, D/dt v>, all by finite differences
    inner = []
    for s in (a, b, c):
        g = fisher_gradient(s.mu_t, proc, s.mass_floor).values
        inner.append(_int(s.grid.weights, g * s.velocity_raw, s.mu_t.values, s.mask))
    d_inner = d1[0] * inner[0] + d1[1] * inner[1] + d1[2] * inner[2]
    acc = acceleration((a, b, c)).values
    inner_res = abs(d_inner - (bracket + _int(w, gI * acc, mu, mask)))
    claim_res = abs(dtt - (bracket + sig2 / 8.0 * gI2))
    return FisherRow(b.t, Is[1], dtt, rhs, dtt - rhs, (t1, t2, t3), gI2, inner_res, claim_res)


@dataclass
class FisherConvexityReport:
    rows: List[FisherRow]
    alpha_sq: float
    rel_slack: float
    holds: bool
    convex: bool
    second_differences: np.ndarray


def fisher_convexity_check(flow: Sequence[Sequence[FlowSlice]], alpha_sq: float,
                           process: Optional[ReferenceProcess] = None,
                           rel_slack: float = 0.05, tol: float = 1e-6) -> FisherConvexityReport:
    """Second time derivative of the Fisher information against its lower bound.

    ``flow`` is a sequence of triples (t - dt, t, t + dt).  The bound is
    accepted when ``dtt I >= rhs - rel_slack (rhs + 1)``.  Convexity is judged
    on the second differences of I over the (evenly spaced) triple centres.
    """
    rows = [fisher_terms(tr, process, alpha_sq) for tr in flow]
    holds = all(r.dtt_fisher >= r.rhs - rel_slack * (r.rhs + 1.0) for r in rows)
    I = np.array([r.fisher for r in rows])
    sd = np.diff(I, 2) if I.size >= 3 else np.zeros(0)
    return FisherConvexityReport(rows, alpha_sq, rel_slack, holds, bool(np.all(sd >= -tol)), sd)


@dataclass
class DiagnosticsReport:
    t: float
    entropy: float
    fisher: float
    velocity_norm_sq: float
    acceleration_residual_l2: float
    conservation_c: float
    conservation_c_alt: float
    h_f: float
    h_b: float
    dt_h_f: float
    dt_h_b: float
    gamma_dt_h_f: float
    gamma_dt_h_b: float
    gamma2_dtt_h_f: float
    gamma2_dtt_h_b: float


def diagnostics_report(triple: Sequence[FlowSlice], process: Optional[ReferenceProcess] = None) -> DiagnosticsReport:
    a, b, c = _triple(triple)
    proc = b.process if process is None else process
    ed = entropy_derivative_checks((a, b, c), proc)
    cc, ca = conservation_constant(b, proc)
    v = b.velocity_raw
    return DiagnosticsReport(
        b.t, entropy(b.mu_t, proc), fisher_information(b.mu_t, proc, b.mass_floor),
        _int(b.grid.weights, v * v, b.mu_t.values, b.mask), ode_residual((a, b, c), proc).value,
        cc, ca, ed.h_f, ed.h_b, ed.dt_h_f, ed.dt_h_b, ed.gamma_dt_h_f, ed.gamma_dt_h_b,
        ed.gamma2_dtt_h_f, ed.gamma2_dtt_h_b)
