"""Independent reference computations used to validate the solvers."""
from __future__ import annotations

import math
from typing import Tuple

import numpy as np


def fd_weights(order: int, half_width: int) -> np.ndarray:
    """Central finite-difference weights on offsets -k..k for the given derivative order."""
    offs = np.arange(-half_width, half_width + 1, dtype=float)
    n = offs.size
    V = np.vander(offs, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


def fd_derivative(fn, x: float, order: int, step: float = 1e-2, half_width: int = 4) -> float:
    """``order``-th derivative of a scalar function by a wide central stencil."""
    w = fd_weights(order, half_width)
    offs = np.arange(-half_width, half_width + 1)
    vals = np.array([fn(x + k * step) for k in offs])
    return float(np.dot(w, vals) / step ** order)


def kl_coupling_newton(R: np.ndarray, a: np.ndarray, b: np.ndarray, tol: float = 1e-15,
                       max_iter: int = 200) -> Tuple[np.ndarray, float]:
    """Minimize ``sum pi log(pi / R)`` over couplings of masses a, b by damped Newton.

    Works in the primal: pi = a b^T + sum theta_k E_k with E_k spanning
    matrices with zero row and column sums, so every iterate is feasible.
    Steps are backtracked to keep pi > 0 and decrease the objective.
    """
    n, m = R.shape
    basis = []
    for i in range(n - 1):
        for j in range(m - 1):
            E = np.zeros((n, m))
            E[i, j] = E[-1, -1] = 1.0
            E[i, -1] = E[-1, j] = -1.0
            basis.append(E)
    B = np.array(basis).reshape(len(basis), -1)          # (k, n m)
    pi0 = np.outer(a, b).ravel()
    lR = np.log(R.ravel())

    def obj(th):
        p = pi0 + B.T @ th
        return float(np.sum(p * (np.log(p) - lR))), p

    th = np.zeros(len(basis))
    F, p = obj(th)
    for _ in range(max_iter):
        g = B @ (np.log(p) - lR + 1.0)
        H = (B / p) @ B.T
        step = np.linalg.solve(H, g)
        dec = float(g @ step)
        if dec < tol:
            break
        s = 1.0
        while True:
            cand = th - s * step
            pc = pi0 + B.T @ cand
            if np.all(pc > 0):
                Fc, pc = obj(cand)
                if Fc <= F - 1e-4 * s * dec or s < 1e-12:
                    break
            s *= 0.5
        th, F, p = cand, Fc, pc
    return p.reshape(n, m), F
