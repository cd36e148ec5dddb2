import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bridgelab.claims import hermite_check, kernel_checks
from bridgelab.grid import Grid
from bridgelab.kernels import (GridTooCoarseError, ReferenceProcess, bridge_moments, build_kernel, fk_kernel,
                               hermite_kernel_derivative, ou_bridge_sample, ou_transition_density)
from bridgelab.oracles import fd_derivative, fd_weights


def mehler(x, z, t, alpha):
    # Mehler form: m(z) sum_k e^{-2 alpha k t} He_k He_k / k!, summed in closed form
    s = 0.5 / alpha
    r = math.exp(-2 * alpha * t) ** 0.5
    q = 1 - r * r
    u, v = x / math.sqrt(s), z / math.sqrt(s)
    mz = np.exp(-v * v / 2) / math.sqrt(2 * math.pi * s)
    return mz / math.sqrt(q) * np.exp(-(r * r * (u * u + v * v) - 2 * r * u * v) / (2 * q))




def test_ou_density_matches_mehler():
    x, z = np.meshgrid(np.linspace(-2, 2, 7), np.linspace(-2, 2, 7))
    for alpha, t in [(1.0, 0.3), (2.0, 1.0), (0.5, 2.0)]:
        np.testing.assert_allclose(ou_transition_density(x, z, t, alpha), mehler(x, z, t, alpha), rtol=1e-12)


def test_fd_weights_reproduce_polynomials():
    w = fd_weights(2, 3)
    offs = np.arange(-3, 4)
    for p in range(7):
        assert np.dot(w, offs.astype(float) ** p) == pytest.approx(2.0 if p == 2 else 0.0, abs=1e-10)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_hermite_derivative_against_differences(m):
    for x, z, t in [(-0.7, 0.4, 0.5), (1.1, -0.2, 1.5)]:
        exact = hermite_kernel_derivative(m, x, z, t, 1.3)
        fd = fd_derivative(lambda y: float(ou_transition_density(y, z, t, 1.3)), x, m, step=0.02, half_width=5)
        assert exact == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_hermite_check_tolerance():
    assert hermite_check(1.0) <= 1e-6
    assert hermite_check(2.0, 0.5) <= 1e-6


def test_kernel_is_stochastic_on_resolved_rows(grid401):
    k = build_kernel(ReferenceProcess.ou(grid401, 1.0), 0.5)
    rows = k.values @ grid401.weights
    np.testing.assert_allclose(rows[k.resolved], 1.0, atol=1e-12)
    assert np.all(rows <= 1.0 + 1e-12)


@pytest.mark.parametrize("kind", ["ou", "brownian"])
def test_semigroup_stationarity_reversibility(grid401, kind):
    proc = ReferenceProcess.ou(grid401, 1.0) if kind == "ou" else ReferenceProcess.brownian(grid401)
    # Brownian rows keep their mass inside [-6, 6] only for short times
    errs = kernel_checks(proc) if kind == "ou" else kernel_checks(proc, 0.1, 0.2)
    assert max(errs.values()) <= 1e-6, errs


def test_too_coarse_grid_raises():
    with pytest.raises(GridTooCoarseError):
        build_kernel(ReferenceProcess.ou(Grid(-6, 6, 21), 1.0), 1e-3)


def test_tabulated_quadratic_potential_is_ou(grid401):
    tab = ReferenceProcess.tabulated(grid401, 0.5 * grid401.points ** 2)
    ou = ReferenceProcess.ou(grid401, 1.0)
    kt, ko = build_kernel(tab, 0.7), build_kernel(ou, 0.7)
    assert np.max(np.abs(kt.values - ko.values)[ko.resolved]) / ko.values.max() < 1e-4


def test_ground_state_decay_rate(grid401):
    # sub-leading eigenvalue of the OU(1/2) semigroup in L2(m) is exp(-t/2)
    proc = ReferenceProcess.ou(grid401, 0.5)
    k = build_kernel(proc, 1.0)
    w, m = grid401.weights, proc.m
    A = np.sqrt(w)[:, None] * k.values * np.sqrt(w)[None, :] * np.sqrt(m)[:, None] / np.sqrt(m)[None, :]
    ev = np.sort(np.abs(np.linalg.eigvals(A)))[::-1]
    assert ev[0] == pytest.approx(1.0, abs=1e-6)
    assert ev[1] == pytest.approx(math.exp(-0.5), abs=1e-5)


def test_fk_constant_potential_is_rescaled_kernel(grid401):
    proc = ReferenceProcess.brownian(grid401)
    k0 = build_kernel(proc, 0.4)
    kc = fk_kernel(proc, np.full(grid401.n_points, 0.7), 0.4, 8)
    np.testing.assert_allclose(kc.log_values, k0.log_values - 0.7 * 0.4, atol=1e-12)


def test_brownian_bridge_moments():
    mean, var = bridge_moments(np.array([0.0, 1.0]), np.array([2.0, -1.0]), 0.25, 0.0)
    np.testing.assert_allclose(mean, [0.5, 0.5])
    assert float(var) == pytest.approx(0.1875)


def test_bridge_sample_deterministic():
    a = ou_bridge_sample(np.zeros(5), np.ones(5), 0.5, 1.0, rng_seed=3)
    b = ou_bridge_sample(np.zeros(5), np.ones(5), 0.5, 1.0, rng_seed=3)
    np.testing.assert_array_equal(a, b)


@given(st.floats(0.2, 3.0), st.floats(0.05, 2.0), st.floats(0.3, 2.0))
def test_ou_bridge_endpoints_and_variance(alpha, t_frac, sigma):
    t = min(t_frac, 0.95) if t_frac < 1 else 0.5
    mean, var = bridge_moments(0.3, -0.4, t, alpha, sigma)
    assert var > 0
    m0, v0 = bridge_moments(0.3, -0.4, 1e-9, alpha, sigma)
    assert m0 == pytest.approx(0.3, abs=1e-6) and v0 < 1e-6


@given(st.floats(0.2, 3.0), st.floats(0.1, 2.0))
def test_detailed_balance_property(alpha, t):
    g = Grid(-5.0, 5.0, 201)
    proc = ReferenceProcess.ou(g, alpha)
    k = build_kernel(proc, t)
    mp = proc.m[:, None] * k.values
    assert np.max(np.abs(mp - mp.T)) <= 1e-12 * np.max(mp)
