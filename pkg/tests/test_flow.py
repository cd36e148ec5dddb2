import numpy as np
import pytest

from bridgelab import marginals
from bridgelab.flow import (FKProblem, bridge_mixture_density, continuity_residual, fk_flow, heat_flow_check,
                            propagate, propagate_many)
from bridgelab.grid import Field, Grid, integrate
from bridgelab.kernels import ReferenceProcess
from bridgelab.solver import SchrodingerProblem, sinkhorn

from conftest import gaussian_coupling_oracle


def ou_flow_variance(t, a, alpha):
    # Gaussian conditioning of (X_0, X_t, X_1) under the stationary OU law,
    # averaged over the optimal Gaussian coupling of N(0, a) with itself
    s = 0.5 / alpha
    times = np.array([0.0, t, 1.0])
    C = s * np.exp(-alpha * np.abs(times[:, None] - times[None, :]))
    E = C[[0, 2]][:, [0, 2]]
    k = C[1, [0, 2]]
    coef = np.linalg.solve(E, k)
    vcond = C[1, 1] - k @ coef
    c = gaussian_coupling_oracle(a, a, alpha)[1]
    S = np.array([[a, c], [c, a]])
    return float(coef @ S @ coef + vcond)


@pytest.mark.parametrize("t", [0.2, 0.5, 0.8])
def test_flow_variance_matches_gaussian_oracle(fig1_small, t):
    s = propagate(fig1_small, t)
    assert s.mu_t.variance() == pytest.approx(ou_flow_variance(t, 0.25, 1.0), abs=1e-6)
    assert abs(s.mu_t.mean()) < 1e-12


def test_endpoints_recover_marginals(asym_small):
    p = asym_small.problem
    np.testing.assert_allclose(propagate(asym_small, 0.0).mu_t.values, p.mu.values, atol=1e-8)
    np.testing.assert_allclose(propagate(asym_small, 1.0).mu_t.values, p.nu.values, atol=1e-8)


def test_slices_normalized_without_drift(asym_small):
    for s in propagate_many(asym_small, [0.1, 0.5, 0.9]):
        assert integrate(s.mu_t) == pytest.approx(1.0, abs=1e-13)
        assert abs(s.drift) < 1e-8


def test_time_reversal_symmetry(fig1_small):
    a, b = propagate(fig1_small, 0.3), propagate(fig1_small, 0.7)
    np.testing.assert_allclose(a.mu_t.values, b.mu_t.values, atol=1e-10)
    np.testing.assert_allclose(a.velocity_raw[a.mask], -b.velocity_raw[b.mask], atol=1e-8)


def test_forward_backward_heat_equations(asym_small):
    r = heat_flow_check((propagate(asym_small, 0.499), propagate(asym_small, 0.501)))
    assert max(r.residual_f, r.residual_g, r.hjb_f, r.hjb_g) < 1e-3


def test_continuity_equation_converges(asym_small):
    tr = [propagate(asym_small, t) for t in (0.499, 0.5, 0.501)]
    coarse = continuity_residual(tr)
    p = asym_small.problem
    g = Grid(-6.0, 6.0, 801)
    proc = ReferenceProcess.ou(g, 1.0)
    mu = marginals.gaussian(g, -0.5, 0.3)
    nu = marginals.gaussian_mixture(g, [{"weight": 0.6, "mean": 0.8, "variance": 0.2},
                                        {"weight": 0.4, "mean": -0.6, "variance": 0.4}])
    fine_sol = sinkhorn(SchrodingerProblem(proc, mu, nu))
    fine = continuity_residual([propagate(fine_sol, t) for t in (0.4995, 0.5, 0.5005)])
    assert coarse < 2e-3
    assert fine < coarse / 3  # second order in (h, dt)


def test_mixture_of_bridges_equals_flow(asym_small):
    t = 0.4
    dens = bridge_mixture_density(asym_small, t, stride=5)
    assert np.max(np.abs(dens - propagate(asym_small, t).mu_t.values[::5])) < 1e-6


def test_fk_constant_potential_leaves_flow_unchanged():
    g = Grid(-6.0, 6.0, 301)
    proc = ReferenceProcess.brownian(g)
    f = marginals.gaussian(g, 0.3, 0.4)
    a = fk_flow(FKProblem(proc, Field(g, np.zeros(g.n_points)), f.log, 8), 0.5)
    b = fk_flow(FKProblem(proc, Field(g, np.full(g.n_points, 2.5)), f.log, 8), 0.5)
    np.testing.assert_allclose(a.mu_t.values, b.mu_t.values, atol=1e-13)
    np.testing.assert_allclose(a.v_t.values, b.v_t.values, atol=1e-10)


def test_time_outside_unit_interval(asym_small):
    with pytest.raises(ValueError):
        propagate(asym_small, 1.5)
