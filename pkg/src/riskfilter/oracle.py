"""Brute-force reference computations used to cross-check the solvers.

* :class:`DiscreteEnergyQP` discretizes the minimum-energy problem with
  forward Euler and solves it through a dense KKT system.
* :func:`dense_grid_minimize` evaluates an objective on a lattice (n <= 2).
* :func:`finite_diff` gives central differences with an error gauge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import GridError, OracleError
from .model import Ensemble, ParamTuple, Signal, signal_eval


class DiscreteEnergyQP:
    """Forward-Euler minimum-energy problem of one member on ``K`` steps of ``[0, t_end]``.

    Unknowns are the initial disturbance ``eta`` and piecewise-constant
    process disturbances ``v_0 .. v_{K-1}``.  Up to step ``j`` the cost is

        |eta|^2_{Gamma^-1} + h sum_{i<j} (|v_i|^2_{R^-1} + |y(t_i) - C x_i|^2_{Q^-1})

    with ``x_0 = x0 + eta`` and ``x_{i+1} = x_i + h (A x_i + f(t_i) + B v_i)``.
    """

    def __init__(self, member: ParamTuple, shared: Ensemble, y: Signal, K: int, t_end: Optional[float] = None):
        if int(K) != K or K < 1:
            raise ValueError("K must be a positive integer")
        self.K = int(K)
        self.t_end = float(y.grid.t_end if t_end is None else t_end)
        self.h = self.t_end / self.K
        n, m = shared.n, shared.m
        self.n, self.m = n, m
        A, B, C = member.A, shared.B, shared.C
        self.C = C
        self.Gi = np.linalg.inv(member.Gamma)
        self.Ri = np.linalg.inv(member.R)
        self.Qi = np.linalg.inv(member.Q)
        self.times = self.t_end * np.arange(self.K + 1) / self.K
        self.y = np.array([signal_eval(y, t) for t in self.times])
        # x_i = Phi[i] z + c[i] with z = (eta, v_0, ..., v_{K-1})
        nz = n + self.K * m
        Phi = np.zeros((self.K + 1, n, nz))
        c = np.zeros((self.K + 1, n))
        Phi[0, :, :n] = np.eye(n)
        c[0] = shared.x0
        F = np.eye(n) + self.h * A
        for i in range(self.K):
            Phi[i + 1] = F @ Phi[i]
            Phi[i + 1][:, n + i * m : n + (i + 1) * m] += self.h * B
            c[i + 1] = F @ c[i] + self.h * shared.forcing_at(self.times[i])
        self.Phi, self.c = Phi, c

    def _quadratic(self, j):
        """Cost up to step ``j`` as ``z^T H z + 2 g^T z + k`` over the first ``n + j m`` unknowns."""
        n, m, h = self.n, self.m, self.h
        nz = n + j * self.m
        H = np.zeros((nz, nz))
        g = np.zeros(nz)
        H[:n, :n] += self.Gi
        for i in range(j):
            H[n + i * m : n + (i + 1) * m, n + i * m : n + (i + 1) * m] += h * self.Ri
        const = 0.0
        CtQi = self.C.T @ self.Qi
        for i in range(j):
            Ph = self.Phi[i][:, :nz]
            e = self.y[i] - self.C @ self.c[i]
            H += h * Ph.T @ CtQi @ self.C @ Ph
            g -= h * Ph.T @ (CtQi @ e)
            const += h * e @ self.Qi @ e
        return H, g, const

    def _check_index(self, j):
        if int(j) != j or not 0 <= j <= self.K:
            raise GridError(f"index {j} not on the coarse grid 0..{self.K}")
        return int(j)

    def value(self, j: int, xi) -> float:
        """Minimal discrete energy that reaches ``xi`` at coarse step ``j``."""
        j = self._check_index(j)
        xi = np.asarray(xi, dtype=float)
        H, g, const = self._quadratic(j)
        nz = H.shape[0]
        E = self.Phi[j][:, :nz]
        rhs_c = xi - self.c[j]
        kkt = np.block([[2.0 * H, E.T], [E, np.zeros((self.n, self.n))]])
        sol = np.linalg.solve(kkt, np.concatenate([-2.0 * g, rhs_c]))
        z = sol[:nz]
        return float(z @ H @ z + 2.0 * g @ z + const)

    def argmin(self, j: int) -> np.ndarray:
        """Terminal state of the unconstrained energy minimizer up to step ``j``."""
        j = self._check_index(j)
        H, g, _ = self._quadratic(j)
        z = np.linalg.solve(H, -g)
        return self.Phi[j][:, : H.shape[0]] @ z + self.c[j]


def qp_value_function(member: ParamTuple, shared: Ensemble, y: Signal, t_index: int, xi, K: int = 100) -> float:
    return DiscreteEnergyQP(member, shared, y, K).value(t_index, xi)


@dataclass(frozen=True)
class LatticeResult:
    x: np.ndarray
    value: float
    cell: np.ndarray
    enlarged: bool


def dense_grid_minimize(
    objective: Callable,
    center,
    radius,
    resolution: int = 201,
    vectorized: bool = True,
) -> LatticeResult:
    """Minimize ``objective`` over a uniform lattice on the box ``center +- radius``.

    ``objective`` receives an ``(k, n)`` array of points when ``vectorized``.
    If the best lattice point lies on the box boundary the box is doubled
    once; a second boundary hit raises :class:`OracleError`.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    n = center.size
    if n > 2:
        raise ValueError("dense lattice search supports n <= 2")
    radius = np.broadcast_to(np.asarray(radius, dtype=float), (n,)).copy()
    for attempt in range(2):
        axes = [np.linspace(c - r, c + r, resolution) for c, r in zip(center, radius)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        if vectorized:
            vals = np.asarray(objective(pts), dtype=float)
        else:
            vals = np.array([objective(p) for p in pts])
        if not np.all(np.isfinite(vals)):
            raise OracleError("objective is not finite on the lattice")
        best = int(np.argmin(vals))
        idx = np.unravel_index(best, (resolution,) * n)
        cell = 2.0 * radius / (resolution - 1)
        if not any(i in (0, resolution - 1) for i in idx):
            return LatticeResult(pts[best], float(vals[best]), cell, attempt > 0)
        radius = 2.0 * radius
    raise OracleError("minimizer lies on the lattice boundary after enlarging the box")


@dataclass(frozen=True)
class FiniteDifference:
    value: np.ndarray
    value_coarse: np.ndarray
    gauge: float


def _central(f, x, h):
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        fp, fm = np.asarray(f(x + e), dtype=float), np.asarray(f(x - e), dtype=float)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise OracleError("function is not finite near the evaluation point")
        cols.append((fp - fm) / (2.0 * h[i]))
    return np.stack(cols, axis=-1)


def finite_diff(f: Callable, x, mode: str = "gradient", rel_step: float = 1e-5) -> FiniteDifference:
    """Central differences with step ``h = rel_step (1 + |x|)`` in every coordinate.

    ``mode="gradient"`` expects a scalar ``f`` and returns a vector;
    ``mode="jacobian"`` returns ``d f_j / d x_i`` with shape ``f.shape + (n,)``.
    The gauge is the largest difference between the ``h`` and ``h/2``
    estimates.
    """
    if mode not in ("gradient", "jacobian"):
        raise ValueError("mode must be 'gradient' or 'jacobian'")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = np.full(x.size, rel_step * (1.0 + np.linalg.norm(x)))
    d1 = _central(f, x, h)
    d2 = _central(f, x, 0.5 * h)
    if mode == "gradient":
        d1, d2 = d1.reshape(-1), d2.reshape(-1)
    return FiniteDifference(d2, d1, float(np.max(np.abs(d1 - d2))))

