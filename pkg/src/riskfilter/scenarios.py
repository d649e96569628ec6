"""Experiment presets, parameter samplers and integrated-risk reports.

Two presets are provided: a damped harmonic oscillator with uncertain
damping and a chain of two amplidynes with uncertain inductances.  A
scenario run synthesizes data, runs the filter bank, computes the
risk-neutral, entropic and worst-case estimators and integrates every risk
level along every estimator.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from . import estimate, risk
from .exceptions import ConfigError
from .integrate import IntegratorConfig
from .kalman import FilterBank, run_bank
from .model import ConstantForcing, Ensemble, ParamTuple, TimeGrid
from .synth import PARAMETER_STREAM, GroundTruth, NoiseConfig, rng_stream, synthesize

DEFAULT_THETAS = (0.1, 0.5, 1.0, 20.0, 750.0, 1000.0)


# --------------------------------------------------------------------------
# samplers


@dataclass(frozen=True)
class UniformSampler:
    low: tuple
    high: tuple

    def __post_init__(self):
        lo, hi = np.atleast_1d(self.low).astype(float), np.atleast_1d(self.high).astype(float)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ConfigError("uniform sampler needs low < high of equal length")
        object.__setattr__(self, "low", tuple(lo.tolist()))
        object.__setattr__(self, "high", tuple(hi.tolist()))

    @property
    def dim(self) -> int:
        return len(self.low)

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        u = gen.random((size, self.dim))
        return np.asarray(self.low) + u * (np.asarray(self.high) - np.asarray(self.low))

    def to_dict(self):
        return {"kind": "uniform", "low": list(self.low), "high": list(self.high)}


@dataclass(frozen=True)
class LogNormalSampler:
    """``exp(Z)`` with ``Z`` normal of the given log-scale mean and spread.

    ``spread`` selects whether ``var`` is a variance (default) or a
    standard deviation.
    """

    mean: tuple
    var: tuple
    spread: str = "variance"

    def __post_init__(self):
        mu, v = np.atleast_1d(self.mean).astype(float), np.atleast_1d(self.var).astype(float)
        if mu.shape != v.shape or np.any(v < 0):
            raise ConfigError("lognormal sampler needs non-negative var matching mean")
        if self.spread not in ("variance", "std"):
            raise ConfigError("lognormal spread must be 'variance' or 'std'")
        object.__setattr__(self, "mean", tuple(mu.tolist()))
        object.__setattr__(self, "var", tuple(v.tolist()))

    @property
    def dim(self) -> int:
        return len(self.mean)

    @property
    def std(self) -> np.ndarray:
        v = np.asarray(self.var)
        return np.sqrt(v) if self.spread == "variance" else v

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        z = gen.standard_normal((size, self.dim))
        return np.exp(np.asarray(self.mean) + self.std * z)

    def to_dict(self):
        return {"kind": "lognormal", "mean": list(self.mean), "var": list(self.var), "spread": self.spread}


@dataclass(frozen=True)
class GaussianMixtureSampler:
    weights: tuple
    means: tuple
    covs: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.asarray(self.covs, dtype=float)
        if cov.ndim == 2:
            cov = cov[:, :, None] if mu.shape[1] == 1 else cov[None]
        k, d = mu.shape
        if w.shape != (k,) or cov.shape != (k, d, d) or np.any(w < 0) or not w.sum() > 0:
            raise ConfigError("gaussian mixture needs k weights, k means (d,) and k covs (d, d)")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ConfigError("gaussian mixture covariances must be positive definite") from None
        object.__setattr__(self, "weights", tuple((w / w.sum()).tolist()))
        object.__setattr__(self, "means", tuple(map(tuple, mu.tolist())))
        object.__setattr__(self, "covs", tuple(tuple(map(tuple, c)) for c in cov.tolist()))

    @property
    def dim(self) -> int:
        return len(self.means[0])

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        cum = np.cumsum(self.weights)
        comp = np.minimum(np.searchsorted(cum, gen.random(size), side="right"), len(cum) - 1)
        z = gen.standard_normal((size, self.dim))
        L = np.linalg.cholesky(np.asarray(self.covs))
        return np.asarray(self.means)[comp] + np.einsum("kij,kj->ki", L[comp], z)

    def to_dict(self):
        return {
            "kind": "gaussian_mixture",
            "weights": list(self.weights),
            "means": [list(m) for m in self.means],
            "covs": [[list(r) for r in c] for c in self.covs],
        }


_SAMPLERS = {
    "uniform": UniformSampler,
    "lognormal": LogNormalSampler,
    "gaussian_mixture": GaussianMixtureSampler,
}


def sampler_from_dict(d) -> object:
    if not isinstance(d, dict) or d.get("kind") not in _SAMPLERS:
        raise ConfigError(f"sampler must be a mapping with kind in {sorted(_SAMPLERS)}")
    args = {k: v for k, v in d.items() if k != "kind"}
    try:
        return _SAMPLERS[d["kind"]](**args)
    except TypeError as exc:
        raise ConfigError(f"bad {d['kind']} sampler: {exc}") from None


# --------------------------------------------------------------------------
# configuration


OSCILLATOR = dict(
    t_end=5.0,
    x0=(1.0, 0.0),
    Gamma=0.1,
    R=0.05,
    Q=0.05,
    sampler={"kind": "uniform", "low": [0.1], "high": [3.0]},
    true_member="max",
    theta_list=DEFAULT_THETAS,
)

AMPLIDYNE = dict(
    t_end=10.0,
    x0=(0.5, 1.0, 10.0, 20.0),
    Gamma=(0.125, 0.25, 2.5, 5.0),
    R=0.01,
    Q=1600.0,
    sampler={"kind": "uniform", "low": [10.0, 10.0], "high": [40.0, 40.0]},
    true_member="max_diff",
    theta_list=(4.0,),
)

AMPLIDYNE_CONSTANTS = dict(rho=(5.0, 10.0, 5.0, 10.0), k=(20.0, 50.0, 20.0, 50.0), L1=0.5, L3=0.5, e0=1.0)

PRESETS = {"oscillator": OSCILLATOR, "amplidyne": AMPLIDYNE}

LOGNORMAL_OSCILLATOR = {"kind": "lognormal", "mean": [-0.25], "var": [0.5]}
MIXTURE_AMPLIDYNE = {
    "kind": "gaussian_mixture",
    "weights": [0.95, 0.05],
    "means": [[15.0, 35.0], [35.0, 15.0]],
    "covs": [[[2.0, 0.0], [0.0, 2.0]], [[1.0, 0.0], [0.0, 1.0]]],
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one experiment run.

    Fields left as ``None`` take the preset's value.  ``theta_list`` holds
    the finite positive risk-aversion levels; the risk-neutral (``0``) and
    worst-case (``inf``) estimators are always added.  ``true_member`` is
    ``"max"`` (largest first parameter), ``"max_diff"`` (largest first minus
    second parameter) or a member index.  ``custom`` describes explicit
    member matrices for ``preset="custom"``.
    """

    preset: str = "oscillator"
    sampler: Optional[dict] = None
    N_A: int = 100
    theta_list: Optional[tuple] = None
    seed: int = 0
    t_end: Optional[float] = None
    num_intervals: int = 1000
    substeps: int = 10
    x0: Optional[tuple] = None
    Gamma: Optional[object] = None
    R: Optional[object] = None
    Q: Optional[object] = None
    noise_scale: float = 1.0
    true_member: Optional[object] = None
    custom: Optional[dict] = None

    def __post_init__(self):
        if self.preset not in (*PRESETS, "custom"):
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.preset == "custom" and not isinstance(self.custom, dict):
            raise ConfigError("preset 'custom' needs a 'custom' mapping")
        if int(self.N_A) != self.N_A or self.N_A < 1:
            raise ConfigError("N_A must be a positive integer")
        if int(self.num_intervals) != self.num_intervals or self.num_intervals < 1:
            raise ConfigError("num_intervals must be a positive integer")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ConfigError("substeps must be a positive integer")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        thetas = []
        raw = self.theta_list
        if raw is None:
            raw = PRESETS.get(self.preset, {}).get("theta_list", DEFAULT_THETAS)
        for th in raw:
            th = float(th)
            if th == 0.0 or math.isinf(th):
                continue
            if not th > 0 or math.isnan(th):
                raise ConfigError(f"theta values must be positive, got {th}")
            thetas.append(th)
        object.__setattr__(self, "theta_list", tuple(sorted(set(thetas))))
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be non-negative")
        if self.sampler is not None:
            sampler_from_dict(self.sampler)

    def resolved(self, name):
        """Field value with the preset default filled in."""
        val = getattr(self, name)
        if val is None and self.preset in PRESETS:
            return PRESETS[self.preset].get(name)
        return val

    @property
    def labels(self) -> tuple:
        return (0.0, *self.theta_list, math.inf)

    def grid(self) -> TimeGrid:
        t_end = self.resolved("t_end")
        if t_end is None:
            t_end = self.custom.get("t_end") if self.custom else None
        if t_end is None:
            raise ConfigError("t_end is required")
        return TimeGrid(float(t_end), self.num_intervals)

    def to_dict(self) -> dict:
        return {f.name: _plain(getattr(self, f.name)) for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, d) -> "ScenarioConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        d = dict(d)
        if "theta_list" in d:
            d["theta_list"] = tuple(_parse_level(v) for v in d["theta_list"])
        for key in ("x0",):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    def replace(self, **changes) -> "ScenarioConfig":
        return ScenarioConfig.from_dict({**self.to_dict(), **changes})


def _parse_level(v):
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity", "+inf"):
        return math.inf
    return float(v)


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


def _matrix(v, n, name):
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return a * np.eye(n)
    if a.ndim == 1:
        if a.size != n:
            raise ConfigError(f"{name} diagonal must have {n} entries")
        return np.diag(a)
    if a.shape != (n, n):
        raise ConfigError(f"{name} must be {n}x{n}")
    return a


# --------------------------------------------------------------------------
# presets


@dataclass(frozen=True)
class ScenarioSetup:
    ensemble: Ensemble
    noise: NoiseConfig
    params: np.ndarray

    @property
    def true_member(self) -> int:
        return self.noise.true_member


def _select_true(rule, params) -> int:
    if isinstance(rule, (int, np.integer)) and not isinstance(rule, bool):
        if not 0 <= rule < len(params):
            raise ConfigError(f"true_member index {rule} out of range")
        return int(rule)
    if rule == "max":
        return int(np.argmax(params[:, 0]))
    if rule == "max_diff":
        if params.shape[1] < 2:
            raise ConfigError("'max_diff' needs two-dimensional parameters")
        return int(np.argmax(params[:, 0] - params[:, 1]))
    raise ConfigError(f"unknown true_member rule {rule!r}")


def _sample_params(config: ScenarioConfig, dim: int) -> np.ndarray:
    sampler = sampler_from_dict(config.resolved("sampler"))
    if sampler.dim != dim:
        raise ConfigError(f"sampler has dimension {sampler.dim}, preset needs {dim}")
    return sampler.sample(rng_stream(config.seed, PARAMETER_STREAM), config.N_A)


def _noise(config, n, m, r, true_member):
    s = config.noise_scale
    return NoiseConfig(
        config.seed,
        s * _matrix(config.resolved("Gamma"), n, "Gamma"),
        s * _matrix(config.resolved("R"), m, "R"),
        s * _matrix(config.resolved("Q"), r, "Q"),
        true_member,
    )


def oscillator_matrix(c: float, m: float = 1.0, k: float = 1.0) -> np.ndarray:
    return np.array([[0.0, 1.0], [-k / m, -c / m]])


def build_oscillator(config: ScenarioConfig) -> ScenarioSetup:
    """Oscillator with unit mass and spring constant and sampled damping."""
    params = _sample_params(config, 1)
    if np.any(params <= 0):
        raise ConfigError("damping samples must be positive")
    Gamma = _matrix(config.resolved("Gamma"), 2, "Gamma")
    R = _matrix(config.resolved("R"), 1, "R")
    Q = _matrix(config.resolved("Q"), 1, "Q")
    members = tuple(ParamTuple(oscillator_matrix(c), Gamma, R, Q) for c in params[:, 0])
    ens = Ensemble(members, [[0.0], [1.0]], [[1.0, 0.0]], config.resolved("x0"))
    true = _select_true(config.resolved("true_member"), params)
    return ScenarioSetup(ens, _noise(config, 2, 1, 1, true), params)


def amplidyne_matrix(L2: float, L4: float, constants=AMPLIDYNE_CONSTANTS) -> np.ndarray:
    rho, k = constants["rho"], constants["k"]
    L = (constants["L1"], L2, constants["L3"], L4)
    A = np.zeros((4, 4))
    for i in range(4):
        A[i, i] = -rho[i] / L[i]
        if i > 0:
            A[i, i - 1] = k[i - 1] / L[i]
    return A


def build_amplidyne(config: ScenarioConfig) -> ScenarioSetup:
    """Two chained amplidynes with sampled inductances ``(L2, L4)``."""
    params = _sample_params(config, 2)
    if np.any(params <= 0):
        raise ConfigError("inductance samples must be positive")
    cst = AMPLIDYNE_CONSTANTS
    Gamma = _matrix(config.resolved("Gamma"), 4, "Gamma")
    R = _matrix(config.resolved("R"), 1, "R")
    Q = _matrix(config.resolved("Q"), 1, "Q")
    members = tuple(ParamTuple(amplidyne_matrix(L2, L4), Gamma, R, Q) for L2, L4 in params)
    B = np.array([[1.0 / cst["L1"]], [0.0], [0.0], [0.0]])
    C = np.array([[0.0, 0.0, 0.0, cst["k"][3]]])
    forcing = ConstantForcing([cst["e0"] / cst["L1"], 0.0, 0.0, 0.0])
    ens = Ensemble(members, B, C, config.resolved("x0"), forcing)
    true = _select_true(config.resolved("true_member"), params)
    return ScenarioSetup(ens, _noise(config, 4, 1, 1, true), params)


def build_custom(config: ScenarioConfig) -> ScenarioSetup:
    """Explicit member matrices: ``custom = {A: [...], B, C, x0, Gamma, R, Q, forcing?}``."""
    c = config.custom
    try:
        A_list = np.asarray(c["A"], dtype=float)
        B, C, x0 = c["B"], c["C"], c["x0"]
    except KeyError as exc:
        raise ConfigError(f"custom preset is missing {exc}") from None
    if A_list.ndim == 2:
        A_list = A_list[None]
    n = A_list.shape[1]
    B = np.atleast_2d(np.asarray(B, float))
    C = np.atleast_2d(np.asarray(C, float))
    Gamma = _matrix(config.Gamma if config.Gamma is not None else c.get("Gamma", 1.0), n, "Gamma")
    R = _matrix(config.R if config.R is not None else c.get("R", 1.0), B.shape[1], "R")
    Q = _matrix(config.Q if config.Q is not None else c.get("Q", 1.0), C.shape[0], "Q")
    members = tuple(ParamTuple(A, Gamma, R, Q) for A in A_list)
    forcing = ConstantForcing(c["forcing"]) if c.get("forcing") is not None else None
    ens = Ensemble(members, B, C, config.x0 if config.x0 is not None else x0, forcing)
    rule = config.true_member if config.true_member is not None else c.get("true_member", 0)
    params = np.arange(ens.N, dtype=float)[:, None]
    true = _select_true(rule, params)
    s = config.noise_scale
    noise = NoiseConfig(config.seed, s * Gamma, s * R, s * Q, true)
    return ScenarioSetup(ens, noise, params)


def build(config: ScenarioConfig) -> ScenarioSetup:
    return {"oscillator": build_oscillator, "amplidyne": build_amplidyne, "custom": build_custom}[
        config.preset
    ](config)


# --------------------------------------------------------------------------
# reports


@dataclass
class RiskReport:
    """Integrated risks: ``cells[i, j] = int_0^T rho_{levels[i]}(V(t, x_labels[j](t))) dt``."""

    levels: tuple
    labels: tuple
    cells: np.ndarray
    times: np.ndarray
    energies: Dict[str, np.ndarray] = field(default_factory=dict)
    nonconverged: Dict[str, list] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.levels)) != len(self.levels) or len(set(self.labels)) != len(self.labels):
            raise ValueError("report row and column labels must be unique")
        if not np.all(np.isfinite(self.cells)):
            raise ValueError("report cells must be finite")

    def cell(self, level, label) -> float:
        return float(self.cells[self.levels.index(float(level)), self.labels.index(float(label))])

    def row(self, level) -> np.ndarray:
        return self.cells[self.levels.index(float(level))]

    @property
    def level_names(self):
        return [estimate.label_name(t) for t in self.levels]

    @property
    def label_names(self):
        return [estimate.label_name(t) for t in self.labels]

    @property
    def converged(self) -> bool:
        return not any(self.nonconverged.values())


def integrated_risks(energy_traces, levels, times) -> np.ndarray:
    """Trapezoid integrals of ``rho_tau`` along each energy trace (rows: levels)."""
    out = np.empty((len(levels), len(energy_traces)))
    for j, V in enumerate(energy_traces):
        for i, tau in enumerate(levels):
            out[i, j] = trapezoid(risk.rho(risk.RiskSpec.from_level(tau), V, axis=-1), times)
    return out


def make_report(bank: FilterBank, estimators: Sequence, levels: Optional[Sequence] = None) -> RiskReport:
    labels = tuple(float(e.label) for e in estimators)
    levels = tuple(float(t) for t in (levels if levels is not None else labels))
    traces = [estimate.trajectory_energies(bank, e.x) for e in estimators]
    cells = integrated_risks(traces, levels, bank.grid.points)
    return RiskReport(
        levels=levels,
        labels=labels,
        cells=cells,
        times=np.array(bank.grid.points),
        energies={e.name: V for e, V in zip(estimators, traces)},
        nonconverged={e.name: np.flatnonzero(~np.asarray(e.converged)).tolist() for e in estimators},
    )


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    setup: ScenarioSetup
    truth: GroundTruth
    bank: FilterBank
    estimators: Dict[str, estimate.EstimatorTrajectory]
    report: RiskReport

    @property
    def converged(self) -> bool:
        return self.report.converged


def run_scenario(config: ScenarioConfig, jobs: int = 1, descent: Optional[estimate.DescentConfig] = None):
    """Synthesize, filter, estimate and report for one configuration."""
    setup = build(config)
    grid = config.grid()
    icfg = IntegratorConfig(config.substeps)
    truth = synthesize(setup.ensemble, grid, setup.noise, icfg)
    bank = run_bank(setup.ensemble, truth.y, grid, icfg, jobs=jobs)
    x0 = estimate.risk_neutral(bank)
    ests = [x0]
    prev = x0
    for theta in config.theta_list:
        prev = estimate.entropic_trajectory(bank, theta, descent, warm_start=prev)
        ests.append(prev)
    ests.append(estimate.worst_case_trajectory(bank, descent))
    report = make_report(bank, ests)
    return ScenarioResult(config, setup, truth, bank, {e.name: e for e in ests}, report)


def repeat_runs(config: ScenarioConfig, seeds: Sequence[int], jobs: int = 1):
    """Reports of the same configuration under several seeds."""
    return [run_scenario(config.replace(seed=int(s)), jobs=jobs).report for s in seeds]


# --------------------------------------------------------------------------
# summary statistics


def relative_improvement(a: float, b: float) -> float:
    """``(a - b) / a``."""
    return (a - b) / a


@dataclass(frozen=True)
class ImprovementStats:
    theta_max: float
    esssup_improvement: float
    expectation_penalty: float


def improvement_stats(report: RiskReport) -> ImprovementStats:
    """Worst-case gain and mean-energy loss of the largest finite theta over theta = 0.

    ``esssup_improvement = (S_0 - S_max) / S_0`` and
    ``expectation_penalty = (E_max - E_0) / E_max``.
    """
    finite = [t for t in report.labels if 0 < t < math.inf]
    if 0.0 not in report.labels or not finite:
        raise KeyError("report needs a theta = 0 column and a finite positive theta column")
    if 0.0 not in report.levels or math.inf not in report.levels:
        raise KeyError("report needs expectation and esssup rows")
    tmax = max(finite)
    S0, Smax = report.cell(math.inf, 0.0), report.cell(math.inf, tmax)
    E0, Emax = report.cell(0.0, 0.0), report.cell(0.0, tmax)
    return ImprovementStats(tmax, relative_improvement(S0, Smax), relative_improvement(Emax, E0))
