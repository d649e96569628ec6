"""Ground-truth trajectories and disturbed measurements.

Noise values are drawn at the grid points and linearly interpolated in
between; the true state is integrated with the same fixed-step RK4 scheme
as the filters.  All randomness comes from counter-based Philox streams
keyed by ``(seed, stream)``, so results are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DimensionError, NotSPDError
from .integrate import IntegratorConfig, rk4_path
from .kalman import interpolator
from .model import Ensemble, Signal, TimeGrid

GENERATOR = "numpy.random.Philox-4x64"

# stream ids under one seed
PARAMETER_STREAM = 0
NOISE_STREAM = 1


def rng_stream(seed: int, stream: int) -> np.random.Generator:
    """Philox generator keyed by ``(seed, stream)``; independent per stream."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return np.random.Generator(np.random.Philox(key=np.array([seed, stream], dtype=np.uint64)))


def _cov(m, name):
    """Symmetric positive semidefinite covariance; the zero matrix is allowed."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)) or np.max(np.abs(m - m.T), initial=0.0) > 1e-12:
        raise NotSPDError(f"{name} must be finite and symmetric")
    m = 0.5 * (m + m.T)
    if np.any(m) and np.linalg.eigvalsh(m).min() < -1e-12 * np.abs(m).max():
        raise NotSPDError(f"{name} is not positive semidefinite")
    m.setflags(write=False)
    return m


def gaussian_draw(gen: np.random.Generator, cov, size: Optional[int] = None) -> np.ndarray:
    """Zero-mean normal draws ``L z`` with ``L`` the Cholesky factor of ``cov``.

    Returns a vector, or an array of shape ``(size, d)``.  A zero covariance
    yields zeros without consuming random numbers.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = cov.shape[0]
    shape = (d,) if size is None else (size, d)
    if not np.any(cov):
        return np.zeros(shape)
    L = np.linalg.cholesky(cov)
    z = gen.standard_normal(shape)
    return z @ L.T


@dataclass(frozen=True)
class NoiseConfig:
    seed: int
    Gamma: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    true_member: int

    def __post_init__(self):
        for name in ("Gamma", "R", "Q"):
            object.__setattr__(self, name, _cov(getattr(self, name), name))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "true_member", int(self.true_member))

    def scaled(self, s: float) -> "NoiseConfig":
        return NoiseConfig(self.seed, s * self.Gamma, s * self.R, s * self.Q, self.true_member)


@dataclass(frozen=True)
class GroundTruth:
    x_true: Signal
    y: Signal
    eta: np.ndarray
    v: Signal
    mu: Signal


def synthesize(
    ensemble: Ensemble,
    grid: TimeGrid,
    noise: NoiseConfig,
    cfg: Optional[IntegratorConfig] = None,
) -> GroundTruth:
    """Disturbed state of the true member and its noisy measurement.

    Draw order on the noise stream: ``eta``, then ``v`` at all grid points,
    then ``mu`` at all grid points.
    """
    if not 0 <= noise.true_member < ensemble.N:
        raise DimensionError(f"true_member {noise.true_member} outside [0, {ensemble.N})")
    n, m, r = ensemble.n, ensemble.m, ensemble.r
    shapes = {"Gamma": (n, n), "R": (m, m), "Q": (r, r)}
    for name, shape in shapes.items():
        if getattr(noise, name).shape != shape:
            raise DimensionError(f"{name} has shape {getattr(noise, name).shape}, expected {shape}")
    gen = rng_stream(noise.seed, NOISE_STREAM)
    eta = gaussian_draw(gen, noise.Gamma)
    v = Signal(grid, gaussian_draw(gen, noise.R, len(grid)))
    mu = Signal(grid, gaussian_draw(gen, noise.Q, len(grid)))

    A = ensemble.members[noise.true_member].A
    B = ensemble.B
    vfun = interpolator(v)

    def rhs(t, x):
        return A @ x + ensemble.forcing_at(t) + B @ vfun(t)

    x = rk4_path(rhs, ensemble.x0 + eta, grid, cfg)
    y = x @ ensemble.C.T + mu.values
    eta.setflags(write=False)
    return GroundTruth(Signal(grid, x), Signal(grid, y), eta, v, mu)
