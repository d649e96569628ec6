"""Verification suites shared by the ``verify`` command and the test-suite.

Every check returns a :class:`CheckResult` with a pass flag, a one-line
detail string and the measured numbers.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List

import numpy as np

from . import estimate, oracle, risk
from .integrate import IntegratorConfig
from .kalman import precision_direct_bank, run_bank
from .model import Ensemble, ParamTuple, Signal, TimeGrid
from .scenarios import (
    LOGNORMAL_OSCILLATOR,
    ScenarioConfig,
    build,
    improvement_stats,
    oscillator_matrix,
    run_scenario,
)
from .synth import NoiseConfig, synthesize

OSCILLATOR_THETAS = (0.1, 0.5, 1.0, 20.0, 750.0, 1000.0)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    metrics: Dict[str, object] = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


# --------------------------------------------------------------------------
# shared fixtures


@lru_cache(maxsize=8)
def scenario_bank(preset="oscillator", seed=0, lognormal=False):
    """Synthesized data and filter bank for a preset (cached)."""
    cfg = ScenarioConfig(preset=preset, seed=seed, sampler=LOGNORMAL_OSCILLATOR if lognormal else None)
    setup = build(cfg)
    grid = cfg.grid()
    truth = synthesize(setup.ensemble, grid, setup.noise)
    bank = run_bank(setup.ensemble, truth.y, grid)
    return setup, truth, bank


@lru_cache(maxsize=4)
def smooth_bank(seed=0, lognormal=True):
    """Filter bank driven by the noise-free output of the true member.

    Finite differences along the grid need a smooth measurement signal.
    """
    cfg = ScenarioConfig(seed=seed, sampler=LOGNORMAL_OSCILLATOR if lognormal else None)
    setup = build(cfg)
    grid = cfg.grid()
    truth = synthesize(setup.ensemble, grid, setup.noise.scaled(0.0))
    return run_bank(setup.ensemble, truth.y, grid)


@lru_cache(maxsize=4)
def oscillator_estimators(seed=0, lognormal=True, thetas=OSCILLATOR_THETAS, smooth=False):
    """Risk-neutral, warm-started entropic chain and worst-case estimators."""
    bank = smooth_bank(seed, lognormal) if smooth else scenario_bank("oscillator", seed, lognormal)[2]
    out = {0.0: estimate.risk_neutral(bank)}
    prev = out[0.0]
    for th in thetas:
        prev = estimate.entropic_trajectory(bank, th, warm_start=prev)
        out[th] = prev
    out[math.inf] = estimate.worst_case_trajectory(bank)
    return out


# --------------------------------------------------------------------------
# criterion checks


def riccati_check(seed=0) -> CheckResult:
    """Covariance/precision consistency on both presets."""
    t0 = time.perf_counter()
    worst = dict(asym=0.0, inv=0.0, direct=0.0)
    spd = True
    for preset in ("oscillator", "amplidyne"):
        setup, _, bank = scenario_bank(preset, seed)
        n = bank.n
        asym = np.max(np.abs(bank.Pi - np.swapaxes(bank.Pi, -1, -2)))
        try:
            np.linalg.cholesky(bank.Pi)
        except np.linalg.LinAlgError:
            spd = False
        inv = np.max(np.linalg.norm(bank.Pi @ bank.P - np.eye(n), 2, axis=(-2, -1)))
        Pd = precision_direct_bank(setup.ensemble, bank.grid, IntegratorConfig())
        direct = np.max(
            np.linalg.norm(Pd - bank.P, 2, axis=(-2, -1)) / np.linalg.norm(bank.P, 2, axis=(-2, -1))
        )
        worst["asym"] = max(worst["asym"], float(asym))
        worst["inv"] = max(worst["inv"], float(inv))
        worst["direct"] = max(worst["direct"], float(direct))
    elapsed = time.perf_counter() - t0
    ok = spd and worst["asym"] <= 1e-9 and worst["inv"] <= 1e-6 and worst["direct"] <= 1e-6
    detail = (
        f"asym={worst['asym']:.1e} |Pi P - I|={worst['inv']:.1e} "
        f"direct/inverse rel={worst['direct']:.1e} spd={spd} ({elapsed:.1f}s)"
    )
    return CheckResult("riccati", bool(ok), detail, {**worst, "spd": spd, "seconds": elapsed})


def _fit_order(h, err):
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def value_function_oracle_check(Ks=(25, 50, 100)) -> CheckResult:
    """Discrete QP energies converge to the quadratic value function at first order."""
    t_end = 2.0
    grid = TimeGrid(t_end, 2000)
    y = Signal.from_function(grid, lambda t: [np.cos(1.3 * t) + 0.3 * np.sin(3.0 * t)])
    systems = {
        "scalar": (
            ParamTuple([[-0.5]], [[0.2]], [[0.1]], [[0.05]]),
            Ensemble((ParamTuple([[-0.5]], [[0.2]], [[0.1]], [[0.05]]),), [[1.0]], [[1.0]], [0.5]),
            np.array([0.4]),
        ),
        "oscillator": (
            ParamTuple(oscillator_matrix(0.7), 0.1 * np.eye(2), [[0.05]], [[0.05]]),
            Ensemble(
                (ParamTuple(oscillator_matrix(0.7), 0.1 * np.eye(2), [[0.05]], [[0.05]]),),
                [[0.0], [1.0]],
                [[1.0, 0.0]],
                [1.0, 0.0],
            ),
            np.array([0.3, -0.4]),
        ),
    }
    orders, errs_all = {}, {}
    for name, (member, ens, xi) in systems.items():
        traj = run_bank(ens, y, grid).trajectory(0)
        i = grid.index_of(t_end)
        d = xi - traj.xhat[i]
        exact = float(d @ traj.P[i] @ d + traj.r[i])
        errs = []
        for K in Ks:
            qp = oracle.DiscreteEnergyQP(member, ens, y, K)
            errs.append(abs(qp.value(K, xi) - exact))
        orders[name] = _fit_order(t_end / np.asarray(Ks, float), np.asarray(errs))
        errs_all[name] = errs
    ok = all(o >= 0.8 for o in orders.values())
    detail = " ".join(f"{k}: order {v:.2f}" for k, v in orders.items())
    return CheckResult("value-function oracle", ok, detail, {"orders": orders, "errors": errs_all})


def entropic_optimality_check(seed=0, lognormal=True) -> CheckResult:
    """Gradient and fixed-point residuals of the entropic estimators on the oscillator."""
    _, _, bank = scenario_bank("oscillator", seed, lognormal)
    ests = oscillator_estimators(seed, lognormal)
    worst_g, worst_fp = 0.0, 0.0
    for th in OSCILLATOR_THETAS:
        x = ests[th].x
        scale = 1.0 + np.linalg.norm(x, axis=-1)
        # recomputed from the bank rather than taken from the solver record
        g = risk.gradient(bank.xhat, bank.P, bank.r, x, th)
        fp = risk.fixed_point_map(bank.xhat, bank.P, bank.r, x, th) - x
        worst_g = max(worst_g, float(np.max(np.linalg.norm(g, axis=-1) / scale)))
        worst_fp = max(worst_fp, float(np.max(np.linalg.norm(fp, axis=-1) / scale)))
    ok = worst_g <= 1e-9 and worst_fp <= 1e-7
    detail = f"max |grad|/(1+|x|)={worst_g:.1e} max fixed-point residual/(1+|x|)={worst_fp:.1e}"
    return CheckResult("entropic optimality", ok, detail, {"grad": worst_g, "fixed_point": worst_fp})


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def derivative_check(draws=50, seed=0, lognormal=True) -> CheckResult:
    """Analytic gradient, Hessian and time derivative against finite differences."""
    bank = smooth_bank(seed, lognormal)
    ests = oscillator_estimators(seed, lognormal, smooth=True)
    gen = np.random.default_rng(12345)
    M = bank.grid.num_intervals
    dt = bank.grid.dt
    g_err, h_err, t_err = [], [], []
    t_tol = []
    for _ in range(draws):
        i = int(gen.integers(2, M - 1))
        theta = float(np.exp(gen.uniform(np.log(0.1), np.log(1000.0))))
        xhat, P, r = bank.snapshot(i)
        x0 = ests[0.0].x[i]
        spread = np.std(xhat, axis=0) + 1e-3
        x = x0 + spread * gen.standard_normal(bank.n)
        rs = r - r.min()
        f = lambda z: risk.objective(xhat, P, rs, z, theta)  # noqa: E731
        g = risk.gradient(xhat, P, rs, x, theta)
        g_err.append(_rel(oracle.finite_diff(f, x).value, g))
        grad = lambda z: risk.gradient(xhat, P, rs, z, theta)  # noqa: E731
        H = risk.hessian(xhat, P, rs, x, theta)
        h_err.append(_rel(oracle.finite_diff(grad, x, mode="jacobian").value, H))
        th = OSCILLATOR_THETAS[int(gen.integers(len(OSCILLATOR_THETAS)))]
        traj = ests[th]
        t = float(bank.grid.points[i])
        an = estimate.entropic_time_derivative(bank, th, traj, t)
        fd = (traj.x[i + 1] - traj.x[i - 1]) / (2.0 * dt)
        t_err.append(_rel(fd, an))
        t_tol.append(max(1e-4, 10.0 * dt**2 * _third_derivative_scale(traj.x, i, dt, an)))
    ok_g = max(g_err) <= 1e-5
    ok_h = max(h_err) <= 1e-4
    ok_t = all(e <= tol for e, tol in zip(t_err, t_tol))
    detail = (
        f"gradient rel={max(g_err):.1e} hessian rel={max(h_err):.1e} "
        f"time-derivative rel={max(t_err):.1e} over {draws} draws"
    )
    return CheckResult(
        "derivatives", ok_g and ok_h and ok_t, detail, {"gradient": g_err, "hessian": h_err, "time": t_err}
    )


def _third_derivative_scale(x, i, dt, an):
    """Relative size of the central-difference truncation term ``x''' dt^2 / 6``."""
    lo, hi = max(i - 2, 0), min(i + 2, len(x) - 1)
    if hi - lo < 4:
        return 0.0
    d3 = (x[hi] - 2 * x[i + 1] + 2 * x[i - 1] - x[lo]) / (2 * dt**3)
    return float(np.linalg.norm(d3) / 6.0 / max(np.linalg.norm(an), 1e-300))


def risk_bounds_check(samples=1000, seed=0) -> CheckResult:
    """Entropic risk sandwich and monotonicity in theta on random energy vectors."""
    gen = np.random.default_rng(seed)
    thetas = np.logspace(-3, 3, 20)
    bounds_ok = True
    mono_ok = True
    for _ in range(samples):
        N = int(gen.integers(1, 60))
        v = gen.exponential(10.0, N) * gen.choice([1e-3, 1.0, 1e2])
        theta = float(np.exp(gen.uniform(np.log(1e-3), np.log(1e3))))
        lo, hi = risk.rho_bounds_check(v, theta, atol=1e-12 * (1.0 + np.max(np.abs(v))))
        bounds_ok &= lo and hi
        vals = np.array([risk.entropic_risk(v, t) for t in thetas])
        mono_ok &= bool(np.all(np.diff(vals) >= -1e-12 * (1.0 + np.max(np.abs(v)))))
    return CheckResult(
        "risk bounds",
        bool(bounds_ok and mono_ok),
        f"sandwich ok={bool(bounds_ok)} monotone in theta ok={bool(mono_ok)} ({samples} vectors)",
    )


def theta_limits_check(seed=0, lognormal=True) -> CheckResult:
    """Small-theta and large-theta limits of the entropic estimator."""
    _, _, bank = scenario_bank("oscillator", seed, lognormal)
    ests = oscillator_estimators(seed, lognormal)
    x0, xinf = ests[0.0].x, ests[math.inf].x
    scale = float(np.max(np.linalg.norm(x0, axis=-1)))
    sup = lambda a, b: float(np.max(np.linalg.norm(a - b, axis=-1)))  # noqa: E731

    small = {}
    prev = ests[0.0]
    for th in (1e-4, 1e-3, 1e-2):
        prev = estimate.entropic_trajectory(bank, th, warm_start=prev)
        small[th] = sup(prev.x, x0)
    large = {}
    prev = ests[1000.0]
    large[1e3] = sup(prev.x, xinf)
    large[1e2] = sup(estimate.entropic_trajectory(bank, 1e2, warm_start=ests[20.0]).x, xinf)
    prev = estimate.entropic_trajectory(bank, 1e4, warm_start=prev)
    large[1e4] = sup(prev.x, xinf)
    gap = sup(ests[750.0].x, ests[1000.0].x)

    ok_small = small[1e-4] <= 1e-3 * scale and small[1e-4] <= small[1e-3] <= small[1e-2]
    ok_large = large[1e2] > large[1e3] > large[1e4]
    ok_gap = gap <= 1e-2 * scale
    detail = (
        f"|x_1e-4 - x_0|={small[1e-4]:.1e} |x_theta - x_inf| at 1e2/1e3/1e4="
        f"{large[1e2]:.1e}/{large[1e3]:.1e}/{large[1e4]:.1e} |x_750 - x_1000|={gap:.1e} (scale {scale:.2f})"
    )
    return CheckResult(
        "theta limits", bool(ok_small and ok_large and ok_gap), detail, {"small": small, "large": large, "gap": gap}
    )


def worst_case_check(seed=0, lognormal=True) -> CheckResult:
    """Certificates of the worst-case estimator and the ordering of maximal energies."""
    _, _, bank = scenario_bank("oscillator", seed, lognormal)
    ests = oscillator_estimators(seed, lognormal)
    wc = ests[math.inf]
    res = float(np.max(wc.residual))
    support = max(len(c.support) for c in wc.certificates)
    vmax_inf = estimate.trajectory_energies(bank, wc.x).max(axis=1)
    tol = 1e-12 * (1.0 + np.abs(vmax_inf))
    order_ok = True
    for label, e in ests.items():
        if math.isinf(label):
            continue
        order_ok &= bool(np.all(vmax_inf <= estimate.trajectory_energies(bank, e.x).max(axis=1) + tol))
    ok = res <= 1e-6 and support <= bank.n + 1 and order_ok
    detail = f"max residual={res:.1e} max support={support} (n+1={bank.n + 1}) ordering ok={order_ok}"
    return CheckResult("worst-case certificates", bool(ok), detail, {"residual": res, "support": support})


def error_scaling_check(deltas=(0.2, 0.1, 0.05), seed=0, n_members=11) -> CheckResult:
    """Weighted estimator errors shrink linearly with the ensemble spread.

    Members carry a one-sided damping error ``delta * u`` with ``u`` spread
    over ``[0.5, 1.5]``, so the first-order error term does not cancel.
    """
    c_true = 1.0
    grid = TimeGrid(5.0, 1000)
    Gamma, R, Q = 0.1 * np.eye(2), np.array([[0.05]]), np.array([[0.05]])
    B, C, x0 = [[0.0], [1.0]], [[1.0, 0.0]], [1.0, 0.0]
    true_member = ParamTuple(oscillator_matrix(c_true), Gamma, R, Q)
    true_ens = Ensemble((true_member,), B, C, x0)
    truth = synthesize(true_ens, grid, NoiseConfig(seed, Gamma, R, Q, 0))
    ref = run_bank(true_ens, truth.y, grid).trajectory(0)
    offsets = np.linspace(0.5, 1.5, n_members)
    errs0, errsinf = [], []
    for delta in deltas:
        members = tuple(ParamTuple(oscillator_matrix(c_true + delta * u), Gamma, R, Q) for u in offsets)
        bank = run_bank(Ensemble(members, B, C, x0), truth.y, grid)
        errs0.append(float(np.max(estimate.weighted_error_path(estimate.risk_neutral(bank).x, ref))))
        errsinf.append(float(np.max(estimate.weighted_error_path(estimate.worst_case_trajectory(bank).x, ref))))
    p0 = _fit_order(np.asarray(deltas), np.asarray(errs0))
    pinf = _fit_order(np.asarray(deltas), np.asarray(errsinf))
    ok = p0 >= 0.8 and pinf >= 0.8
    detail = f"exponent risk-neutral={p0:.2f} worst-case={pinf:.2f}"
    return CheckResult("error scaling", ok, detail, {"risk_neutral": errs0, "worst_case": errsinf})


def table_check(seeds=(11, 12, 13, 14, 15)) -> CheckResult:
    """Qualitative integrated-risk table: diagonal minima, row order, outlier effect."""
    t0 = time.perf_counter()
    failures = []
    stats = []
    for seed in seeds:
        reps = {}
        for lognormal in (False, True):
            cfg = ScenarioConfig(seed=seed, sampler=LOGNORMAL_OSCILLATOR if lognormal else None)
            rep = run_scenario(cfg).report
            reps[lognormal] = rep
            for tau in rep.levels:
                row = rep.row(tau)
                j = rep.labels.index(tau)
                if row[j] > row.min() + 1e-10 * (1.0 + abs(row.min())):
                    failures.append(f"seed {seed} {'lognormal' if lognormal else 'uniform'}: row {tau} not minimal on diagonal")
            if np.any(np.diff(rep.cells, axis=0) < -1e-10 * (1.0 + np.abs(rep.cells[1:]))):
                failures.append(f"seed {seed}: rows not monotone in tau")
        su, sl = improvement_stats(reps[False]), improvement_stats(reps[True])
        stats.append((seed, su.esssup_improvement, sl.esssup_improvement, sl.expectation_penalty))
        if not (sl.esssup_improvement > sl.expectation_penalty and sl.esssup_improvement > su.esssup_improvement):
            failures.append(f"seed {seed}: outlier pattern missing")
    elapsed = time.perf_counter() - t0
    ok = not failures
    detail = (
        f"{len(seeds)} seeds, lognormal esssup gain "
        + ", ".join(f"{s[2]:.0%}" for s in stats)
        + " vs uniform "
        + ", ".join(f"{s[1]:.0%}" for s in stats)
        + f" ({elapsed:.0f}s)"
        + ("" if ok else "; " + "; ".join(failures[:3]))
    )
    return CheckResult("risk table", ok, detail, {"stats": stats, "seconds": elapsed, "failures": failures})


def dense_grid_check(seed=0, lognormal=True) -> CheckResult:
    """Entropic and worst-case minimizers against exhaustive lattice search."""
    _, _, bank = scenario_bank("oscillator", seed, lognormal)
    ests = oscillator_estimators(seed, lognormal)
    ok = True
    worst, beaten = 0.0, 0.0
    for i in (100, 500, 900):
        xhat, P, r = bank.snapshot(i)
        center = ests[0.0].x[i]
        radius = 5.0 * float(np.max(np.linalg.norm(xhat - xhat.mean(axis=0), axis=-1))) + 1e-6
        for label, fn in (
            (0.5, lambda z: risk.objective(xhat, P, r, z, 0.5)),
            (math.inf, lambda z: risk.energies(xhat, P, r, z)[0].max(axis=-1)),
        ):
            res = oracle.dense_grid_minimize(fn, center, radius, resolution=401)
            x = ests[label].x[i]
            cells = float(np.max(np.abs(res.x - x) / res.cell))
            # the lattice minimum may not undercut the solver
            excess = (float(fn(x[None])[0]) - res.value) / (1.0 + abs(res.value))
            worst, beaten = max(worst, cells), max(beaten, excess)
            # max_k V_k has a kinked ridge, so its lattice argmin may drift one cell further
            ok &= cells <= (3.0 if math.isinf(label) else 2.0) and excess <= 1e-12
    detail = f"max distance {worst:.2f} lattice cells, lattice undercut {max(beaten, 0.0):.1e}"
    return CheckResult("dense-grid oracle", bool(ok), detail, {"cells": worst, "undercut": beaten})


SUITES: Dict[str, List[Callable[[], CheckResult]]] = {
    "riccati": [riccati_check],
    "optimality": [entropic_optimality_check, derivative_check, worst_case_check],
    "limits": [risk_bounds_check, theta_limits_check, error_scaling_check],
    "oracle": [value_function_oracle_check, dense_grid_check],
}


def run_suite(name: str) -> List[CheckResult]:
    if name == "all":
        names = list(SUITES)
    elif name in SUITES:
        names = [name]
    else:
        raise KeyError(name)
    return [check() for n in names for check in SUITES[n]]
