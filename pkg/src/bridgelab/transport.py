"""One-dimensional Wasserstein distances via CDFs and quantile functions."""
from __future__ import annotations

import numpy as np

from .grid import Density

N_QUANTILES = 20001


def _cdf_nodes(mu: Density):
    return mu.grid.points, mu.cdf()


def quantile(mu: Density, u) -> np.ndarray:
    """Inverse of the piecewise-linear CDF through the trapezoid cumulative masses."""
    x, F = _cdf_nodes(mu)
    # drop flat stretches so the inverse is a function
    keep = np.concatenate([[True], np.diff(F) > 0])
    return np.interp(u, F[keep], x[keep])


def _u_grid(n=N_QUANTILES):
    return (np.arange(n) + 0.5) / n


def w1(mu: Density, nu: Density) -> float:
    """``int |F_mu - F_nu| dx`` on a shared grid (piecewise-linear CDFs)."""
    if mu.grid != nu.grid:
        return w1_quantile(mu, nu)
    d = np.abs(mu.cdf() - nu.cdf())
    return float(np.dot(mu.grid.weights, d))


def w1_quantile(mu: Density, nu: Density, n: int = N_QUANTILES) -> float:
    u = _u_grid(n)
    return float(np.mean(np.abs(quantile(mu, u) - quantile(nu, u))))


def w2_squared(mu: Density, nu: Density, n: int = N_QUANTILES) -> float:
    """``int_0^1 |Q_mu(u) - Q_nu(u)|^2 du`` by the midpoint rule."""
    u = _u_grid(n)
    return float(np.mean((quantile(mu, u) - quantile(nu, u)) ** 2))


def gaussian_w2_squared(m1, v1, m2, v2) -> float:
    return (m1 - m2) ** 2 + (np.sqrt(v1) - np.sqrt(v2)) ** 2


def geodesic_quantiles(mu: Density, nu: Density, t: float, n: int = N_QUANTILES) -> np.ndarray:
    """Quantiles of the displacement interpolation ``(1-t) Q_mu + t Q_nu``."""
    u = _u_grid(n)
    return (1.0 - t) * quantile(mu, u) + t * quantile(nu, u)


def w1_to_quantiles(mu: Density, q: np.ndarray) -> float:
    """W1 between a gridded density and a measure given by midpoint quantiles."""
    u = _u_grid(q.size)
    return float(np.mean(np.abs(quantile(mu, u) - q)))


def w1_empirical(samples, mu: Density) -> float:
    """Exact ``int |F_N - F| dx`` for an empirical measure against a gridded density.

    F is the piecewise-linear interpolation of the density's trapezoid CDF
    (0 below the grid, 1 above).  Integration is exact on the union of
    sample points and grid nodes.
    """
    s = np.sort(np.asarray(samples, dtype=float))
    N = s.size
    x, F = _cdf_nodes(mu)
    lo, hi = min(x[0], s[0]), max(x[-1], s[-1])
    br = np.union1d(np.concatenate([[lo], x, [hi]]), s)
    a, b = br[:-1], br[1:]
    Fa = np.interp(a, x, F, left=0.0, right=1.0)
    Fb = np.interp(b, x, F, left=0.0, right=1.0)
    c = np.searchsorted(s, a, side="right") / N  # empirical CDF on [a, b)
    da, db = c - Fa, c - Fb
    L = b - a
    tot = np.abs(da) + np.abs(db)
    # the linear difference changes sign inside the segment: two triangles
    cross = (da * da + db * db) / (2.0 * np.where(tot > 0, tot, 1.0)) * L
    seg = np.where(da * db >= 0, 0.5 * tot * L, cross)
    return float(np.sum(seg))
