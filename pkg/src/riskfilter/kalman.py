"""Kalman-Bucy filters for every ensemble member.

For member ``k`` the filter state ``xhat_k`` and covariance ``Pi_k`` solve

    xhat' = A_k xhat + f(t) + Pi_k C^T Q_k^{-1} (y - C xhat),   xhat(0) = x0
    Pi'   = A_k Pi + Pi A_k^T - Pi C^T Q_k^{-1} C Pi + B R_k B^T,  Pi(0) = Gamma_k

and the value function is ``V_k(t, x) = |x - xhat_k(t)|^2_{P_k(t)} + r_k(t)``
with ``P_k = Pi_k^{-1}`` and ``r_k`` the accumulated output misfit.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import FilterError, IntegrationError
from .integrate import IntegratorConfig, rk4_path
from .model import Ensemble, ParamTuple, Signal, TimeGrid

# members are integrated in fixed-size batches so that results do not depend
# on the number of worker threads
CHUNK_SIZE = 128


def interpolator(y: Signal):
    """Fast piecewise-linear evaluator of ``y`` for use inside RK4 right-hand sides."""
    vals = y.values
    dt = y.grid.dt
    last = y.grid.num_intervals - 1
    t_end = y.grid.t_end

    def ev(t):
        s = t / dt
        i = int(s)
        if i > last:
            i = last
        w = s - i
        if w == 0.0:
            return vals[i]
        if t > t_end * (1 + 1e-12) or t < 0:
            raise IntegrationError(f"measurement requested outside [0, {t_end}]", time=t)
        return vals[i] + w * (vals[i + 1] - vals[i])

    return ev


class _Coefficients:
    """Per-member constant matrices, stacked along axis 0."""

    def __init__(self, ensemble: Ensemble):
        A, Gamma, R, Q = ensemble.stacked()
        B, C = ensemble.B, ensemble.C
        self.A = A
        self.At = np.swapaxes(A, -1, -2).copy()
        self.Gamma = Gamma
        self.Qinv = np.linalg.inv(Q)
        self.Qinv = 0.5 * (self.Qinv + np.swapaxes(self.Qinv, -1, -2))
        self.CtQi = np.einsum("ri,krs->kis", C, self.Qinv)
        self.CtQiC = self.CtQi @ C
        self.BRBt = B @ R @ B.T
        self.C = C


def _filter_rhs(coef: _Coefficients, n: int, yfun, ffun):
    N = coef.A.shape[0]
    C = coef.C

    def rhs(t, S):
        x = S[:, :n]
        Pi = S[:, n:-1].reshape(N, n, n)
        innov = yfun(t) - x @ C.T
        gain = np.einsum("kis,ks->ki", coef.CtQi, innov)
        dx = np.einsum("kij,kj->ki", coef.A, x) + ffun(t) + np.einsum("kij,kj->ki", Pi, gain)
        dPi = coef.A @ Pi + Pi @ coef.At - Pi @ coef.CtQiC @ Pi + coef.BRBt
        dr = np.einsum("ks,kst,kt->k", innov, coef.Qinv, innov)
        return np.concatenate([dx, dPi.reshape(N, n * n), dr[:, None]], axis=1)

    return rhs


def _precision_rhs(coef: _Coefficients, n: int):
    N = coef.A.shape[0]

    def rhs(t, S):
        P = S.reshape(N, n, n)
        dP = -coef.At @ P - P @ coef.A - P @ coef.BRBt @ P + coef.CtQiC
        return dP.reshape(N, n * n)

    return rhs


@dataclass
class FilterTrajectory:
    """One member's filter on the grid (views into the owning bank)."""

    member_index: int
    grid: TimeGrid
    xhat: np.ndarray
    Pi: np.ndarray
    P: np.ndarray
    r: np.ndarray
    residual: np.ndarray
    max_asymmetry: float


@dataclass
class FilterBank:
    """All member filters on a common grid.

    Arrays are time-major: ``xhat[i, k]`` is member ``k`` at grid index ``i``.
    ``residual[i, k] = |y(t_i) - C xhat_k(t_i)|^2_{Q_k^{-1}}`` is the
    integrand of ``r``.
    """

    ensemble: Ensemble
    grid: TimeGrid
    y: Signal
    xhat: np.ndarray
    Pi: np.ndarray
    P: np.ndarray
    r: np.ndarray
    residual: np.ndarray
    max_asymmetry: np.ndarray
    lambda_min: float
    lambda_max: float

    @property
    def N(self) -> int:
        return self.xhat.shape[1]

    @property
    def n(self) -> int:
        return self.xhat.shape[2]

    def trajectory(self, k: int) -> FilterTrajectory:
        return FilterTrajectory(
            k,
            self.grid,
            self.xhat[:, k],
            self.Pi[:, k],
            self.P[:, k],
            self.r[:, k],
            self.residual[:, k],
            float(self.max_asymmetry[k]),
        )

    @property
    def trajectories(self):
        return [self.trajectory(k) for k in range(self.N)]

    def snapshot(self, i: int):
        """``(xhat, P, r)`` of all members at grid index ``i``."""
        return self.xhat[i], self.P[i], self.r[i]

    def time_derivatives(self, i: int):
        """Right-hand sides of the filter and precision equations at grid index ``i``.

        Returns ``(xhat_dot, P_dot, residual)`` with shapes ``(N, n)``,
        ``(N, n, n)`` and ``(N,)``.
        """
        coef = _Coefficients(self.ensemble)
        t = self.grid.points[i]
        x = self.xhat[i]
        innov = self.y(t) - x @ coef.C.T
        gain = np.einsum("kis,ks->ki", coef.CtQi, innov)
        xdot = (
            np.einsum("kij,kj->ki", coef.A, x)
            + self.ensemble.forcing_at(t)
            + np.einsum("kij,kj->ki", self.Pi[i], gain)
        )
        P = self.P[i]
        Pdot = -coef.At @ P - P @ coef.A - P @ coef.BRBt @ P + coef.CtQiC
        g = np.einsum("ks,kst,kt->k", innov, coef.Qinv, innov)
        return xdot, Pdot, g


def _spd_inverse(Pi):
    """Cholesky-based inverse of a stack of SPD matrices."""
    L = np.linalg.cholesky(Pi)
    eye = np.broadcast_to(np.eye(Pi.shape[-1]), Pi.shape)
    Linv = np.linalg.solve(L, eye)
    P = np.swapaxes(Linv, -1, -2) @ Linv
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def _run_chunk(ensemble: Ensemble, offset: int, y: Signal, grid: TimeGrid, cfg: IntegratorConfig):
    coef = _Coefficients(ensemble)
    n, N = ensemble.n, ensemble.N
    yfun = interpolator(y)
    if ensemble.forcing is None:
        zero = np.zeros(n)
        ffun = lambda t: zero  # noqa: E731
    else:
        ffun = ensemble.forcing_at
    rhs = _filter_rhs(coef, n, yfun, ffun)
    asym = np.zeros(N)

    # state layout per member: [xhat (n), Pi (n*n), r (1)]
    def symmetrize(S):
        Pi = S[:, n:-1].reshape(N, n, n)
        d = np.abs(Pi - np.swapaxes(Pi, -1, -2)).max(axis=(1, 2))
        np.maximum(asym, d, out=asym)
        S[:, n:-1] = (0.5 * (Pi + np.swapaxes(Pi, -1, -2))).reshape(N, n * n)
        return S

    S0 = np.concatenate([np.tile(ensemble.x0, (N, 1)), coef.Gamma.reshape(N, n * n), np.zeros((N, 1))], axis=1)
    try:
        states = rk4_path(rhs, S0, grid, cfg, project=symmetrize)
    except IntegrationError as exc:
        raise FilterError(
            f"filter integration failed for members {offset}..{offset + N - 1}: {exc}",
            member=offset,
            time=exc.time,
        ) from exc
    xhat = states[:, :, :n]
    Pi = states[:, :, n:-1].reshape(len(grid), N, n, n)
    r = states[:, :, -1]
    try:
        P = _spd_inverse(Pi)
    except np.linalg.LinAlgError:
        for i in range(len(grid)):
            for k in range(N):
                try:
                    np.linalg.cholesky(Pi[i, k])
                except np.linalg.LinAlgError:
                    t = float(grid.points[i])
                    raise FilterError(
                        f"covariance of member {offset + k} lost positive definiteness at t={t:.6g}",
                        member=offset + k,
                        time=t,
                    ) from None
        raise
    yv = np.array([yfun(t) for t in grid.points])
    innov = yv[:, None, :] - xhat @ coef.C.T
    residual = np.einsum("iks,kst,ikt->ik", innov, coef.Qinv, innov)
    return xhat, Pi, P, r, residual, asym


def default_jobs() -> int:
    env = os.environ.get("RISKFILTER_JOBS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_bank(
    ensemble: Ensemble,
    y: Signal,
    grid: TimeGrid,
    cfg: Optional[IntegratorConfig] = None,
    jobs: int = 1,
) -> FilterBank:
    """Run every member filter on ``grid`` and collect them in a bank."""
    cfg = cfg or IntegratorConfig()
    chunks = [
        (ensemble.subset(range(s, min(s + CHUNK_SIZE, ensemble.N))), s)
        for s in range(0, ensemble.N, CHUNK_SIZE)
    ]
    work = lambda c: _run_chunk(c[0], c[1], y, grid, cfg)  # noqa: E731
    if jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    xhat, Pi, P, r, residual, asym = (np.concatenate(z, axis=1 if z[0].ndim > 1 else 0) for z in zip(*parts))
    eig = np.linalg.eigvalsh(P)
    bank = FilterBank(
        ensemble=ensemble,
        grid=grid,
        y=y,
        xhat=xhat,
        Pi=Pi,
        P=P,
        r=r,
        residual=residual,
        max_asymmetry=asym,
        lambda_min=float(eig.min()),
        lambda_max=float(eig.max()),
    )
    for a in (bank.xhat, bank.Pi, bank.P, bank.r, bank.residual):
        a.setflags(write=False)
    return bank


def run_filter(
    member: ParamTuple,
    shared: Ensemble,
    y: Signal,
    grid: TimeGrid,
    cfg: Optional[IntegratorConfig] = None,
    member_index: int = 0,
) -> FilterTrajectory:
    """Single-member filter; ``shared`` supplies ``B``, ``C``, ``x0`` and forcing."""
    ens = Ensemble((member,), shared.B, shared.C, shared.x0, shared.forcing)
    traj = run_bank(ens, y, grid, cfg).trajectory(0)
    traj.member_index = member_index
    return traj


def value_fn(bank: FilterBank, k: int, t: float, x) -> float:
    """``V_k(t, x) = |x - xhat_k(t)|^2_{P_k(t)} + r_k(t)`` at a grid time."""
    i = bank.grid.index_of(t)
    d = np.asarray(x, dtype=float) - bank.xhat[i, k]
    return float(d @ bank.P[i, k] @ d + bank.r[i, k])


def precision_direct(
    member: ParamTuple,
    shared: Ensemble,
    grid: TimeGrid,
    cfg: Optional[IntegratorConfig] = None,
) -> np.ndarray:
    """Integrate the precision Riccati equation directly from ``Gamma^{-1}``.

    Independent of ``y``; used to cross-check the inverted covariance.
    Returns an array of shape ``(len(grid), n, n)``.
    """
    ens = Ensemble((member,), shared.B, shared.C, shared.x0, shared.forcing)
    return precision_direct_bank(ens, grid, cfg)[:, 0]


def precision_direct_bank(ensemble: Ensemble, grid: TimeGrid, cfg: Optional[IntegratorConfig] = None):
    coef = _Coefficients(ensemble)
    n, N = ensemble.n, ensemble.N
    P0 = _spd_inverse(coef.Gamma)

    def symmetrize(S):
        P = S.reshape(N, n, n)
        return (0.5 * (P + np.swapaxes(P, -1, -2))).reshape(N, n * n)

    states = rk4_path(_precision_rhs(coef, n), P0.reshape(N, n * n), grid, cfg, project=symmetrize)
    return states.reshape(len(grid), N, n, n)
