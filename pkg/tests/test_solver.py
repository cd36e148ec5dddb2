import numpy as np
import pytest
from hypothesis import given, strategies as st

from bridgelab import marginals
from bridgelab.grid import Density, Grid
from bridgelab.kernels import ReferenceProcess
from bridgelab.oracles import kl_coupling_newton
from bridgelab.solver import (SchrodingerProblem, SinkhornConvergenceError, SupportMismatchError,
                              entropic_cost, ipfp, relative_entropy, sinkhorn, sweep_once)

from conftest import gaussian_coupling_oracle, gaussian_kl

# frozen from the scalar covariance minimization in conftest (Gaussian optimum)
FIG1_COST = 0.17655581427339018
STATIONARY_TARGET_COST = 0.0978370021


def test_frozen_oracle_values():
    assert gaussian_coupling_oracle(0.25, 0.25, 1.0)[0] == pytest.approx(FIG1_COST, abs=1e-12)
    assert gaussian_coupling_oracle(0.25, 0.5, 1.0)[0] == pytest.approx(STATIONARY_TARGET_COST, abs=1e-9)


def test_relative_entropy_gaussian(grid401):
    proc = ReferenceProcess.ou(grid401, 1.0)
    mu = marginals.gaussian(grid401, 0.0, 0.25)
    assert relative_entropy(mu, proc) == pytest.approx(gaussian_kl(0.25, 0.5), abs=1e-10)
    assert gaussian_kl(0.25, 0.5) == pytest.approx(0.0965735903, abs=1e-10)


def test_cost_matches_gaussian_closed_form(fig1_small):
    assert fig1_small.cost == pytest.approx(FIG1_COST, abs=1e-6)


def test_off_diagonal_covariance(fig1_small):
    g = fig1_small.problem.grid
    pi = fig1_small.coupling
    x = g.points
    assert float(x @ pi @ x) == pytest.approx(gaussian_coupling_oracle(0.25, 0.25, 1.0)[1], abs=1e-6)


def test_three_point_against_convex_minimization():
    g = Grid(-1.0, 1.0, 3)
    proc = ReferenceProcess.ou(g, 1.0)
    mu = Density(g, np.array([0.2, 0.5, 0.3]))
    nu = Density(g, np.array([0.45, 0.35, 0.2]))
    sol = sinkhorn(SchrodingerProblem(proc, mu, nu, strict_kernel=False), tol=1e-13)
    pi_ref, F = kl_coupling_newton(np.exp(sol.log_R), g.weights * mu.values, g.weights * nu.values)
    np.testing.assert_allclose(sol.coupling, pi_ref, atol=1e-6)
    assert sol.cost == pytest.approx(F, abs=1e-6)
    assert sum(sol.marginal_errors) <= 1e-10


def test_fixpoint_and_gauge(asym_small):
    lf, lg = sweep_once(asym_small)
    assert np.max(np.abs(lf - asym_small.log_f)) < 1e-8
    assert np.max(np.abs(lg - asym_small.log_g)) < 1e-8
    p, w = asym_small.problem, asym_small.problem.grid.weights
    assert np.dot(w * p.mu.values, asym_small.log_f) == pytest.approx(np.dot(w * p.nu.values, asym_small.log_g), abs=1e-10)


def test_swap_symmetry(asym_small):
    p = asym_small.problem
    rev = sinkhorn(SchrodingerProblem(p.process, p.nu, p.mu))
    assert rev.cost == pytest.approx(asym_small.cost, abs=1e-9)
    np.testing.assert_allclose(rev.coupling, asym_small.swapped().coupling, atol=1e-10)


def test_trace_monotone_and_converged(asym_small):
    tr = np.array(asym_small.trace)
    assert np.all(np.diff(tr) <= 1e-15)
    assert asym_small.final_marginal_error <= 1e-10
    assert max(asym_small.marginal_errors) <= 1e-9


def test_cost_split_consistency(asym_small):
    assert entropic_cost(asym_small) == pytest.approx(asym_small.cost_split, abs=1e-8)


def test_acceleration_agrees_with_plain(grid401):
    proc = ReferenceProcess.ou(grid401, 1.0)
    mu, nu = marginals.gaussian(grid401, -1, 0.3), marginals.gaussian(grid401, 1, 0.2)
    a = sinkhorn(SchrodingerProblem(proc, mu, nu), accelerate=True)
    b = sinkhorn(SchrodingerProblem(proc, mu, nu), accelerate=False)
    assert a.cost == pytest.approx(b.cost, abs=1e-9)
    assert a.iterations <= b.iterations


def test_stationary_marginals_cost_zero(grid401):
    proc = ReferenceProcess.ou(grid401, 1.0)
    m = Density.from_log(grid401, proc.log_m)
    sol = sinkhorn(SchrodingerProblem(proc, m, m))
    assert abs(sol.cost) < 1e-12


def test_convergence_error():
    g = Grid(-6, 6, 201)
    proc = ReferenceProcess.ou(g, 1.0)
    with pytest.raises(SinkhornConvergenceError):
        sinkhorn(SchrodingerProblem(proc, marginals.gaussian(g, -2, 0.1), marginals.gaussian(g, 2, 0.1)),
                 tol=1e-14, max_iter=2)


def test_support_mismatch():
    lR = np.array([[0.0, -np.inf], [-np.inf, -np.inf]])
    with pytest.raises(SupportMismatchError):
        ipfp(lR, np.log([0.5, 0.5]), np.log([0.5, 0.5]))


def test_uniform_marginals_supported():
    g = Grid(-3, 3, 301)
    proc = ReferenceProcess.brownian(g)
    sol = sinkhorn(SchrodingerProblem(proc, marginals.uniform(g, -1, 0), marginals.uniform(g, 0.5, 1.5)))
    assert np.all(np.isneginf(sol.log_f[g.points < -1.05]))
    assert sum(sol.marginal_errors) < 1e-9


@given(st.floats(-1.5, 1.5), st.floats(0.1, 0.6), st.floats(-1.5, 1.5), st.floats(0.1, 0.6))
def test_cost_dominates_marginal_entropies(m1, v1, m2, v2):
    # data processing: KL of the coupling exceeds KL of each marginal
    g = Grid(-6.0, 6.0, 241)
    proc = ReferenceProcess.ou(g, 1.0)
    mu, nu = marginals.gaussian(g, m1, v1), marginals.gaussian(g, m2, v2)
    sol = sinkhorn(SchrodingerProblem(proc, mu, nu))
    assert sol.cost >= max(relative_entropy(mu, proc), relative_entropy(nu, proc)) - 1e-9
