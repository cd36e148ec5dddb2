import numpy as np
import pytest

from bridgelab import marginals
from bridgelab.experiments import (coupling_log_concavity, density_log_concavity, fisher_convexity_study,
                                   fk_verification, FKLevel, hot_gas, small_noise_sweep)
from bridgelab.grid import Grid


def test_hot_gas_deterministic_and_consistent(fig1_small):
    a = hot_gas(fig1_small, (50, 400), (0.5,), seed=7, n_replicates=3, mixture_check=False)
    b = hot_gas(fig1_small, (50, 400), (0.5,), seed=7, n_replicates=3, mixture_check=False)
    np.testing.assert_array_equal(a.distances, b.distances)
    assert a.small_sample_warning
    assert np.all(a.distances >= 0)
    assert a.median_distances[1] < a.median_distances[0]
    for h in a.empirical_densities.values():
        assert np.sum(h * np.diff(a.bin_edges)) == pytest.approx(1.0)


def test_hot_gas_mixture_check(asym_small):
    run = hot_gas(asym_small, (100, 200), (0.3,), n_replicates=1, mixture_stride=8)
    assert max(run.mixture_errors.values()) < 1e-6


def test_small_noise_equal_marginals():
    g = Grid(-6.0, 6.0, 401)
    mu = marginals.gaussian(g, 0.0, 0.3)
    rep = small_noise_sweep(mu, mu, (1.0, 0.3, 0.1))
    assert rep.w2_half_sq == pytest.approx(0.0, abs=1e-10)
    # the Brownian reference is improper, so costs can be negative; eps T still vanishes
    assert np.all(np.diff(np.abs(rep.scaled_costs)) < 0)
    assert abs(rep.scaled_costs[-1]) < 0.1


def test_small_noise_rejects_bad_ladder():
    g = Grid(-6.0, 6.0, 101)
    mu = marginals.gaussian(g, 0.0, 0.3)
    with pytest.raises(ValueError):
        small_noise_sweep(mu, mu, (0.1, 0.5))


def test_talagrand_chain_ou():
    g = Grid(-6.0, 6.0, 401)
    mu = marginals.gaussian(g, 0.0, 0.25)
    rep = small_noise_sweep(mu, None, (1.0, 0.5, 0.2), "ou", alpha=1.0, lam=1.0)
    assert all(a >= -1e-8 and b >= -1e-8 for _, a, b in rep.talagrand)


def test_log_concavity_flags(fig1_small, grid401):
    assert coupling_log_concavity(fig1_small).passed
    bimodal = marginals.gaussian_mixture(grid401, [{"weight": 1, "mean": -1.5, "variance": 0.1},
                                                   {"weight": 1, "mean": 1.5, "variance": 0.1}])
    assert not density_log_concavity(bimodal)[0]
    assert density_log_concavity(marginals.gaussian(grid401, 0, 1))[0]


def test_fisher_study_counter_instance():
    g = Grid(-6.0, 6.0, 401)
    gauss = {"family": "gaussian", "mean": 0.0, "variance": 0.25}
    bim = {"family": "gaussian_mixture", "components": [{"weight": 1, "mean": -1.5, "variance": 0.1},
                                                        {"weight": 1, "mean": 1.5, "variance": 0.1}]}
    rows = fisher_convexity_study([1.0], [{"name": "g", "mu": gauss, "nu": gauss},
                                          {"name": "b", "mu": bim, "nu": gauss}], g, t_samples=(0.3, 0.5, 0.7))
    assert rows[0].asserted and rows[0].holds
    assert not rows[1].asserted and rows[1].holds is None


def test_fk_small_levels():
    rep = fk_verification(lambda x: 0.5 * x ** 2, {"family": "gaussian", "mean": 0.5, "variance": 0.3},
                          (0.5,), [FKLevel(201, 4e-3, 8), FKLevel(401, 2e-3, 16)])
    assert rep.orders.min() >= 1.0
    assert rep.constant_shift_velocity < 1e-10
