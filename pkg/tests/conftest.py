import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.optimize import minimize_scalar

from bridgelab import marginals
from bridgelab.grid import Grid
from bridgelab.kernels import ReferenceProcess
from bridgelab.solver import SchrodingerProblem, sinkhorn

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def gaussian_coupling_oracle(a: float, b: float, alpha: float, sigma: float = 1.0):
    """Minimal KL between a coupling of N(0,a), N(0,b) and the stationary OU joint law.

    The optimum over couplings of Gaussian marginals against a Gaussian
    reference is Gaussian, so a scalar minimization over the covariance
    suffices.  Returns (cost, covariance).
    """
    s = 0.5 / alpha
    r = np.exp(-alpha * sigma)
    R = np.array([[s, r * s], [r * s, s]])

    def kl(c):
        S = np.array([[a, c], [c, b]])
        return 0.5 * (np.trace(np.linalg.solve(R, S)) - 2 + np.log(np.linalg.det(R) / np.linalg.det(S)))

    lim = np.sqrt(a * b) * (1 - 1e-9)
    res = minimize_scalar(kl, bounds=(-lim, lim), method="bounded", options={"xatol": 1e-14})
    return float(res.fun), float(res.x)


def gaussian_kl(a: float, b: float, ma: float = 0.0, mb: float = 0.0) -> float:
    return 0.5 * (a / b + (ma - mb) ** 2 / b - 1.0 + np.log(b / a))


@pytest.fixture(scope="session")
def grid401():
    return Grid(-6.0, 6.0, 401)


@pytest.fixture(scope="session")
def fig1_small(grid401):
    proc = ReferenceProcess.ou(grid401, 1.0)
    mu = marginals.gaussian(grid401, 0.0, 0.25)
    return sinkhorn(SchrodingerProblem(proc, mu, mu))


@pytest.fixture(scope="session")
def asym_small(grid401):
    proc = ReferenceProcess.ou(grid401, 1.0)
    mu = marginals.gaussian(grid401, -0.5, 0.3)
    nu = marginals.gaussian_mixture(grid401, [{"weight": 0.6, "mean": 0.8, "variance": 0.2},
                                              {"weight": 0.4, "mean": -0.6, "variance": 0.4}])
    return sinkhorn(SchrodingerProblem(proc, mu, nu))
