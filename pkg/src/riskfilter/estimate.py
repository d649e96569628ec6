"""Ensemble state estimators built on a :class:`~riskfilter.kalman.FilterBank`.

* ``risk_neutral``: minimizer of the mean energy, a precision-weighted average.
* ``entropic_trajectory``: minimizer of the entropic risk of the energies,
  computed pointwise by Barzilai-Borwein gradient descent with Armijo
  backtracking.
* ``worst_case_trajectory``: minimizer of the maximum energy, reached by
  continuation in ``theta``, refined by an interior point solve and
  certified through the convex-hull optimality condition with at most
  ``n + 1`` active members.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import nnls

from . import risk
from .kalman import FilterBank, FilterTrajectory

WORST_CASE_SCHEDULE = (1.0, 10.0, 1e2, 1e3, 1e4, 1e5, 1e6)
# restarts of the per-point solve for grid points missed by the batched pass
RESTARTS = 3
# interior point tolerances retried at points that fail to certify
IPM_RETRY_TOLS = (1e-12, 1e-11, 1e-14, 1e-10)
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class DescentConfig:
    grad_tol: float = 1e-9
    max_iters: int = 500
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    bb_variant: str = "BB1"
    init_step: float = 1.0
    max_shrinks: int = 60
    min_step: float = 1e-12
    max_step: float = 1e12
    memory: int = 20
    precondition: bool = True

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.armijo_c < 1 or not 0 < self.armijo_shrink < 1:
            raise ValueError("armijo_c and armijo_shrink must lie in (0, 1)")
        if self.bb_variant not in ("BB1", "BB2"):
            raise ValueError("bb_variant must be 'BB1' or 'BB2'")
        if not self.init_step > 0:
            raise ValueError("init_step must be positive")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")


# status codes for per-point solves
CONVERGED = 0
MAX_ITERS = 1
LINE_SEARCH = 2
STATUS_NAMES = {CONVERGED: "converged", MAX_ITERS: "max_iters", LINE_SEARCH: "line_search"}


@dataclass
class EntropicResult:
    x: np.ndarray
    iterations: int
    grad_norm: float
    converged: bool
    status: str
    weights: np.ndarray
    fixed_point_residual: float


@dataclass
class WorstCaseCertificate:
    active_set: tuple
    alpha: np.ndarray
    residual: float
    support: tuple = ()

    @property
    def certified(self) -> bool:
        return self.residual <= 1e-6


@dataclass
class EstimatorTrajectory:
    """An estimator on the bank's grid plus per-point solver diagnostics.

    ``label`` is ``0.0`` for the risk-neutral estimator, ``theta`` for the
    entropic one and ``inf`` for the worst case.  ``weights[i]`` holds the
    softmax weights ``c_k`` (entropic), ``1/N`` (risk neutral) or the
    certificate weights ``alpha_k`` (worst case).
    """

    label: float
    x: np.ndarray
    iterations: np.ndarray
    grad_norm: np.ndarray
    converged: np.ndarray
    weights: np.ndarray
    residual: np.ndarray
    certificates: list = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))

    @property
    def name(self) -> str:
        return label_name(self.label)


def label_name(label: float) -> str:
    if math.isinf(label):
        return "inf"
    return repr(float(label)).removesuffix(".0") if float(label).is_integer() else repr(float(label))


# --------------------------------------------------------------------------
# risk neutral


def risk_neutral(bank: FilterBank) -> EstimatorTrajectory:
    """``xhat_0(t) = (sum_k P_k)^{-1} sum_k P_k xhat_k`` at every grid point."""
    N = bank.N
    w = np.full((len(bank.grid), N), 1.0 / N)
    x = risk.weighted_center(bank.xhat, bank.P, w)
    _, _, Pd = risk.energies(bank.xhat, bank.P, bank.r, x)
    g = 2.0 * np.mean(Pd, axis=1)
    M = len(bank.grid)
    return EstimatorTrajectory(
        label=0.0,
        x=x,
        iterations=np.zeros(M, dtype=int),
        grad_norm=np.linalg.norm(g, axis=-1),
        converged=np.ones(M, dtype=bool),
        weights=w,
        residual=np.zeros(M),
    )


# --------------------------------------------------------------------------
# entropic


def _chol_solve(L, b):
    """``(L L^T)^{-1} b`` for batched lower-triangular ``L``."""
    z = np.linalg.solve(L, b[..., None])
    return np.linalg.solve(np.swapaxes(L, -1, -2), z)[..., 0]


def _bb_descent(xhat, P, r, x0, theta, cfg: DescentConfig):
    """Batched BB gradient descent with Armijo backtracking.

    Every row of ``x0`` is an independent problem with its own step size and
    line search.  The Armijo test is taken against the largest of the last
    ``cfg.memory`` objective values (``memory=1`` is the monotone rule), which
    keeps long BB steps on badly conditioned problems.

    With ``cfg.precondition`` the iteration runs in the metric of
    ``S = sum_k c_k P_k`` frozen at the starting point: the search direction
    is ``-S^{-1} g`` and the BB quotients use ``s^T S s`` and
    ``y^T S^{-1} y``.  For ``theta -> 0`` this makes the problem perfectly
    conditioned.  Convergence is always tested on the plain gradient.
    Returns ``(x, grad, weights, iterations, status)``.
    """
    # a common shift of the energies leaves the minimizer unchanged and
    # reduces cancellation in theta * V
    r = r - r.min(axis=-1, keepdims=True)
    x = np.array(x0, dtype=float, copy=True)
    B = x.shape[0]
    F, g, c = risk.objective_and_gradient(xhat, P, r, x, theta)
    gn = np.linalg.norm(g, axis=-1)
    active = gn > cfg.grad_tol * (1.0 + np.linalg.norm(x, axis=-1))
    iters = np.zeros(B, dtype=int)
    status = np.where(active, MAX_ITERS, CONVERGED)
    if cfg.precondition:
        S = np.einsum("bk,bkij->bij", c, P)
        Lc = np.linalg.cholesky(0.5 * (S + np.swapaxes(S, -1, -2)))
    else:
        Lc = None
    step = np.full(B, cfg.init_step)
    hist = np.repeat(F[:, None], cfg.memory, axis=1)
    slack_factor = 64.0 * _EPS

    for _ in range(cfg.max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        full = idx.size == B
        sub = (lambda a: a) if full else (lambda a: a[idx])
        xh, Pk, rk = sub(xhat), sub(P), sub(r)
        xa, ga, Fa = x[idx], g[idx], F[idx]
        La = None if Lc is None else sub(Lc)
        p = -ga if La is None else -_chol_solve(La, ga)
        slope = np.einsum("bi,bi->b", ga, p)
        alpha = step[idx].copy()
        Fref = hist[idx].max(axis=1)
        slack = slack_factor * (1.0 + np.abs(Fref))
        x_new = xa.copy()
        pending = np.ones(idx.size, dtype=bool)
        for _ls in range(cfg.max_shrinks + 1):
            pi = np.flatnonzero(pending)
            xt = xa[pi] + alpha[pi, None] * p[pi]
            if pi.size == idx.size:
                Ft = risk.objective(xh, Pk, rk, xt, theta)
            else:
                Ft = risk.objective(xh[pi], Pk[pi], rk[pi], xt, theta)
            ok = Ft <= Fref[pi] + cfg.armijo_c * alpha[pi] * slope[pi] + slack[pi]
            x_new[pi[ok]] = xt[ok]
            pending[pi[ok]] = False
            alpha[pi[~ok]] *= cfg.armijo_shrink
            if not pending.any():
                break
        failed = pending
        moved = ~failed
        F_new, g_new, c_new = risk.objective_and_gradient(xh, Pk, rk, x_new, theta)
        s = x_new - xa
        yv = g_new - ga
        sy = np.einsum("bi,bi->b", s, yv)
        if cfg.bb_variant == "BB1":
            Ss = s if La is None else np.einsum("bij,bj->bi", La, np.einsum("bji,bj->bi", La, s))
            num, den = np.einsum("bi,bi->b", s, Ss), sy
        else:
            Siy = yv if La is None else _chol_solve(La, yv)
            num, den = sy, np.einsum("bi,bi->b", yv, Siy)
        with np.errstate(divide="ignore", invalid="ignore"):
            bb = np.where(den > 0, num / den, cfg.init_step)
        bb = np.where(np.isfinite(bb) & (bb > 0), bb, cfg.init_step)
        bb = np.clip(bb, cfg.min_step, cfg.max_step)

        upd = idx[moved]
        x[upd] = x_new[moved]
        F[upd] = F_new[moved]
        g[upd] = g_new[moved]
        c[upd] = c_new[moved]
        step[upd] = bb[moved]
        hist[upd] = np.concatenate([hist[upd, 1:], F_new[moved, None]], axis=1)
        iters[idx] += 1
        gn_u = np.linalg.norm(g_new[moved], axis=-1)
        done = gn_u <= cfg.grad_tol * (1.0 + np.linalg.norm(x_new[moved], axis=-1))
        status[upd[done]] = CONVERGED
        active[upd[done]] = False
        status[idx[failed]] = LINE_SEARCH
        active[idx[failed]] = False

    return x, g, c, iters, status


def _fixed_point_residual(xhat, P, r, x, theta):
    return np.linalg.norm(x - risk.fixed_point_map(xhat, P, r, x, theta), axis=-1)


def entropic_minimize(
    bank: FilterBank,
    theta: float,
    t: float,
    x_init=None,
    cfg: Optional[DescentConfig] = None,
) -> EntropicResult:
    """Minimize the entropic risk of the energies at one grid time.

    ``x_init`` defaults to the risk-neutral estimate at ``t``.  A solve that
    hits ``max_iters`` or exhausts the line search returns its last iterate
    with ``converged=False`` and the reason in ``status``.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    cfg = cfg or DescentConfig()
    i = bank.grid.index_of(t)
    xhat, P, r = bank.snapshot(i)
    if x_init is None:
        x_init = risk.weighted_center(xhat, P, np.full(bank.N, 1.0 / bank.N))
    x, g, c, iters, status = _bb_descent(
        xhat[None], P[None], r[None], np.asarray(x_init, float)[None], theta, cfg
    )
    res = float(_fixed_point_residual(xhat, P, r, x[0], theta))
    return EntropicResult(
        x=x[0],
        iterations=int(iters[0]),
        grad_norm=float(np.linalg.norm(g[0])),
        converged=bool(status[0] == CONVERGED),
        status=STATUS_NAMES[int(status[0])],
        weights=c[0],
        fixed_point_residual=res,
    )


def entropic_trajectory(
    bank: FilterBank,
    theta: float,
    cfg: Optional[DescentConfig] = None,
    warm_start: Optional[EstimatorTrajectory] = None,
) -> EstimatorTrajectory:
    """Entropic estimator on the whole grid.

    With ``warm_start`` every grid point starts from ``warm_start.x`` at the
    same time and all points are solved together; points that do not
    converge are then re-solved in time order, each from the better (lower
    objective) of its own iterate and the solution at the previous grid
    point.  Without ``warm_start`` the solve marches forward in time from the
    risk-neutral estimate at ``t = 0``.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    cfg = cfg or DescentConfig()
    M = len(bank.grid)
    if warm_start is not None:
        x, g, c, iters, status = _bb_descent(bank.xhat, bank.P, bank.r, warm_start.x, theta, cfg)
        for i in np.flatnonzero(status != CONVERGED):
            xh, P, r = bank.xhat[i : i + 1], bank.P[i : i + 1], bank.r[i : i + 1]
            for _round in range(RESTARTS):
                starts = np.stack([x[i], x[max(i - 1, 0)]])
                F0 = risk.objective(xh[[0, 0]], P[[0, 0]], r[[0, 0]], starts, theta)
                xi, gi, ci, it, st = _bb_descent(xh, P, r, starts[[int(np.argmin(F0))]], theta, cfg)
                iters[i] += it[0]
                if st[0] == CONVERGED or np.linalg.norm(gi[0]) < np.linalg.norm(g[i]):
                    x[i], g[i], c[i], status[i] = xi[0], gi[0], ci[0], st[0]
                if status[i] == CONVERGED:
                    break
    else:
        x = np.empty((M, bank.n))
        g = np.empty((M, bank.n))
        c = np.empty((M, bank.N))
        iters = np.empty(M, dtype=int)
        status = np.empty(M, dtype=int)
        prev = risk.weighted_center(bank.xhat[0], bank.P[0], np.full(bank.N, 1.0 / bank.N))
        for i in range(M):
            xi, gi, ci, it, st = _bb_descent(
                bank.xhat[i : i + 1], bank.P[i : i + 1], bank.r[i : i + 1], prev[None], theta, cfg
            )
            x[i], g[i], c[i], iters[i], status[i] = xi[0], gi[0], ci[0], it[0], st[0]
            prev = xi[0]
    return EstimatorTrajectory(
        label=float(theta),
        x=x,
        iterations=iters,
        grad_norm=np.linalg.norm(g, axis=-1),
        converged=status == CONVERGED,
        weights=c,
        residual=_fixed_point_residual(bank.xhat, bank.P, bank.r, x, theta),
    )


# --------------------------------------------------------------------------
# worst case


def simplex_nnls(G):
    """Weights ``alpha >= 0``, ``sum(alpha) = 1`` minimizing ``|G alpha|``.

    ``G`` has one column per generator.  Solved as a non-negative least
    squares problem with a heavily weighted sum-to-one row.
    """
    n, p = G.shape
    w = 1e4 * (1.0 + np.max(np.abs(G)))
    A = np.vstack([G, np.full((1, p), w)])
    b = np.zeros(n + 1)
    b[-1] = w
    alpha, _ = nnls(A, b, maxiter=50 * (p + n + 1))
    total = alpha.sum()
    if total <= 0:
        alpha = np.full(p, 1.0 / p)
    else:
        alpha = alpha / total
    return alpha


def caratheodory_reduce(G, alpha, tol=1e-14):
    """Shrink the support of a convex combination to at most ``rows + 1`` points.

    Keeps ``G @ alpha`` and ``sum(alpha)`` unchanged (up to roundoff).
    """
    alpha = np.array(alpha, dtype=float, copy=True)
    n = G.shape[0]
    while True:
        supp = np.flatnonzero(alpha > tol)
        alpha[alpha <= tol] = 0.0
        if supp.size <= n + 1:
            return alpha / alpha.sum()
        A = np.vstack([G[:, supp], np.ones(supp.size)])
        mu = np.linalg.svd(A)[2][-1]
        if not np.any(mu > 0):
            mu = -mu
        pos = mu > 0
        ratios = np.full(supp.size, np.inf)
        ratios[pos] = alpha[supp][pos] / mu[pos]
        j = int(np.argmin(ratios))
        alpha[supp] = alpha[supp] - ratios[j] * mu
        alpha[supp[j]] = 0.0
        alpha = np.maximum(alpha, 0.0)


def _batched_solve(K, rhs):
    """Solve ``K z = rhs`` row by row; singular rows get ``z = 0`` and are flagged."""
    try:
        z = np.linalg.solve(K, rhs[..., None])[..., 0]
        bad = ~np.all(np.isfinite(z), axis=-1)
    except np.linalg.LinAlgError:
        z = np.zeros_like(rhs)
        bad = np.zeros(rhs.shape[0], dtype=bool)
        for b in range(rhs.shape[0]):
            try:
                z[b] = np.linalg.solve(K[b], rhs[b])
            except np.linalg.LinAlgError:
                bad[b] = True
        bad |= ~np.all(np.isfinite(z), axis=-1)
    z[bad] = 0.0
    return z, bad


def _minmax_ipm(xhat, P, r, x0, max_iter=200, sigma=0.1, tol=1e-13):
    """Primal-dual interior point solve of ``min_x max_k V_k(x)``, batched over rows.

    Works on the epigraph form ``min s`` subject to ``V_k(x) <= s``.  The
    returned multipliers sum to one and satisfy
    ``sum_k lam_k P_k (x - xhat_k) = 0`` at the solution.
    """
    B, N, n = xhat.shape
    r0 = r.min(axis=-1)
    r = r - r0[:, None]
    x = np.array(x0, dtype=float, copy=True)
    V, _, _ = risk.energies(xhat, P, r, x)
    scale = 1.0 + np.abs(V).max(axis=-1)
    s = V.max(axis=-1) + 1e-2 * scale
    w = s[:, None] - V
    # start on the central path: lam_k w_k equal for all k, sum(lam) = 1
    lam = (1.0 / np.sum(1.0 / w, axis=-1))[:, None] / w
    active = np.ones(B, dtype=bool)
    iters = np.zeros(B, dtype=int)
    es = np.zeros(n + 1)
    es[-1] = 1.0
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xh, Pk, rk = xhat[idx], P[idx], r[idx]
        xa, sa, la = x[idx], s[idx], lam[idx]
        V, _, Pd = risk.energies(xh, Pk, rk, xa)
        wa = sa[:, None] - V
        mu = sigma * np.sum(la * wa, axis=-1) / N
        G = np.concatenate([2.0 * Pd, -np.ones((idx.size, N, 1))], axis=-1)
        K = np.einsum("bk,bki,bkj->bij", la / wa, G, G)
        K[:, :n, :n] += 2.0 * np.einsum("bk,bkij->bij", la, Pk)
        rhs = -(es + np.einsum("bk,bki->bi", mu[:, None] / wa, G))
        dz, singular = _batched_solve(K, rhs)
        dlam = (mu[:, None] - la * wa + la * np.einsum("bki,bi->bk", G, dz)) / wa
        with np.errstate(divide="ignore"):
            ratio = np.where(dlam < 0, -la / np.where(dlam < 0, dlam, -1.0), np.inf)
        step = np.minimum(1.0, 0.99 * ratio.min(axis=-1))
        for _ls in range(60):
            xt = xa + step[:, None] * dz[:, :n]
            st = sa + step * dz[:, n]
            wt = st[:, None] - risk.energies(xh, Pk, rk, xt)[0]
            bad = np.any(wt <= 0.01 * wa, axis=-1)
            if not bad.any():
                break
            step = np.where(bad, 0.5 * step, step)
        lt = la + step[:, None] * dlam
        x[idx], s[idx], lam[idx] = xt, st, lt
        iters[idx] += 1
        done = (np.sum(lt * wt, axis=-1) <= tol * scale[idx]) | (step < 1e-14) | singular
        active[idx[done]] = False
    lam = lam / lam.sum(axis=-1, keepdims=True)
    return x, s + r0, lam, iters


def _certificate(xhat, P, r, x, eps_active_rel):
    V, _, Pd = risk.energies(xhat, P, r, x)
    vmax = V.max()
    active = np.flatnonzero(V >= vmax - eps_active_rel * (1.0 + abs(vmax)))
    G = Pd[active].T
    a = caratheodory_reduce(G, simplex_nnls(G))
    alpha = np.zeros(V.size)
    alpha[active] = a
    residual = float(np.linalg.norm(G @ a))
    support = tuple(int(k) for k in np.flatnonzero(alpha > 0))
    return WorstCaseCertificate(tuple(int(k) for k in active), alpha, residual, support)


def worst_case_certificate(bank: FilterBank, t: float, x, eps_active_rel: float = 1e-6):
    """Convex-hull optimality certificate of ``x`` for the max-energy problem at ``t``."""
    i = bank.grid.index_of(t)
    return _certificate(*bank.snapshot(i), np.asarray(x, float), eps_active_rel)


def worst_case_trajectory(
    bank: FilterBank,
    cfg: Optional[DescentConfig] = None,
    schedule: Sequence[float] = WORST_CASE_SCHEDULE,
    eps_active_rel: float = 1e-6,
    continuation_iters: int = 30,
) -> EstimatorTrajectory:
    """Minimizer of ``max_k V_k(t, x)`` at every grid point.

    The entropic minimizers for increasing ``theta`` in ``schedule`` are
    followed from the risk-neutral estimate.  At each point the resulting
    approximation is refined by a primal-dual interior point solve of the
    epigraph problem and certified with non-negative weights ``alpha`` such that
    ``sum alpha_k P_k (x - xhat_k) ~ 0``.
    """
    cfg = cfg or DescentConfig()
    cfg = DescentConfig(**{**cfg.__dict__, "max_iters": continuation_iters})
    x = risk_neutral(bank).x
    for theta in schedule:
        x = _bb_descent(bank.xhat, bank.P, bank.r, x, theta, cfg)[0]
    x_cont = x
    x, _, _, iters = _minmax_ipm(bank.xhat, bank.P, bank.r, x_cont)
    M = len(bank.grid)
    out_x = np.empty_like(x)
    certs = []
    for i in range(M):
        xhat, P, r = bank.snapshot(i)
        xi = x[i]
        cert = _certificate(xhat, P, r, xi, eps_active_rel)
        # the interior point iterates lose accuracy once the active members
        # are nearly tied, so other stopping tolerances may certify better
        for tol in IPM_RETRY_TOLS:
            if cert.certified:
                break
            xt = _minmax_ipm(xhat[None], P[None], r[None], x_cont[i : i + 1], tol=tol)[0][0]
            ct = _certificate(xhat, P, r, xt, eps_active_rel)
            if ct.residual < cert.residual:
                xi, cert = xt, ct
        if not cert.certified:
            # re-solve from the weighted form when that lowers the worst energy
            alt = risk.weighted_center(xhat, P, cert.alpha)
            if risk.energies(xhat, P, r, alt)[0].max() <= risk.energies(xhat, P, r, xi)[0].max():
                alt_cert = _certificate(xhat, P, r, alt, eps_active_rel)
                if alt_cert.residual < cert.residual:
                    xi, cert = alt, alt_cert
        out_x[i] = xi
        certs.append(cert)
    residual = np.array([cc.residual for cc in certs])
    weights = np.stack([cc.alpha for cc in certs])
    return EstimatorTrajectory(
        label=math.inf,
        x=out_x,
        iterations=iters,
        grad_norm=residual,
        converged=residual <= 1e-6,
        weights=weights,
        residual=residual,
        certificates=certs,
    )


# --------------------------------------------------------------------------
# diagnostics


def entropic_time_derivative(bank: FilterBank, theta: float, traj: EstimatorTrajectory, t: float):
    """Time derivative of the entropic estimator by implicit differentiation.

    With ``G(t, x) = sum_k w_k P_k (x - xhat_k)`` and ``w_k = exp(theta V_k)``
    the estimator satisfies ``G = 0``, so ``x' = -(D_x G)^{-1} d_t G``.  The
    weights enter only up to a common factor, so softmax weights are used.
    ``d_t V_k`` includes the ``d^T P_k' d`` contribution.
    """
    i = bank.grid.index_of(t)
    xhat, P, r = bank.snapshot(i)
    xdot, Pdot, g = bank.time_derivatives(i)
    x = traj.x[i]
    V, d, Pd = risk.energies(xhat, P, r, x)
    c = risk.softmax_weights(theta, V)
    M = np.einsum("k,kij->ij", c, P) + 2.0 * theta * np.einsum("k,ki,kj->ij", c, Pd, Pd)
    Pxdot = np.einsum("kij,kj->ki", P, xdot)
    Vdot = np.einsum("ki,kij,kj->k", d, Pdot, d) - 2.0 * np.einsum("ki,ki->k", d, Pxdot) + g
    dG = np.einsum("k,ki->i", c, np.einsum("kij,kj->ki", Pdot, d) - Pxdot)
    dG = dG + theta * np.einsum("k,k,ki->i", c, Vdot, Pd)
    return -np.linalg.solve(M, dG)


def risk_neutral_time_derivative(bank: FilterBank, t: float):
    """``x0' = Psum^{-1} (sum_k P_k xhat_k' + P_k' xhat_k - Psum' x0)``."""
    i = bank.grid.index_of(t)
    xhat, P, _ = bank.snapshot(i)
    xdot, Pdot, _ = bank.time_derivatives(i)
    Psum = P.sum(axis=0)
    x0 = np.linalg.solve(Psum, np.einsum("kij,kj->i", P, xhat))
    rhs = np.einsum("kij,kj->i", P, xdot) + np.einsum("kij,kj->i", Pdot, xhat) - Pdot.sum(axis=0) @ x0
    return np.linalg.solve(Psum, rhs)


def weighted_error(traj: EstimatorTrajectory, reference: FilterTrajectory, t: float) -> float:
    """``|x(t) - xhat_ref(t)|_{P_ref(t)}``."""
    i = reference.grid.index_of(t)
    d = traj.x[i] - reference.xhat[i]
    return float(np.sqrt(d @ reference.P[i] @ d))


def weighted_error_path(x, reference: FilterTrajectory) -> np.ndarray:
    d = np.asarray(x) - reference.xhat
    return np.sqrt(np.einsum("ti,tij,tj->t", d, reference.P, d))


def entropic_error_exponent(bank: FilterBank, traj: EstimatorTrajectory, t: float, theta=None) -> float:
    """``J(t) = max_{k,j} (V_k - V_j)`` at the estimate, i.e. the energy spread."""
    i = bank.grid.index_of(t)
    V, _, _ = risk.energies(*bank.snapshot(i), traj.x[i])
    return float(V.max() - V.min())


def trajectory_energies(bank: FilterBank, x) -> np.ndarray:
    """``V_k(t_i, x_i)`` for every grid point and member, shape ``(M+1, N)``."""
    return risk.energies(bank.xhat, bank.P, bank.r, np.asarray(x))[0]
