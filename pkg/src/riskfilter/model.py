"""Core data types: parameter tuples, ensembles, time grids and signals.

Matrices are plain ``numpy`` arrays.  Every container copies its inputs and
marks them read-only, so instances can be shared freely between workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import DimensionError, GridError, NotSPDError

SYMMETRY_TOL = 1e-12


def _frozen(a, ndim=None, name="array"):
    arr = np.array(a, dtype=float, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _as_matrix(a, name):
    arr = np.atleast_2d(np.asarray(a, dtype=float))
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


def spd_check(m, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Validate a symmetric positive definite matrix.

    Scalars and 1x1 inputs are accepted.  An asymmetry below ``tol`` is
    removed by averaging with the transpose.  Raises :class:`NotSPDError`
    when the asymmetry is too large or the Cholesky factorization fails.
    """
    m = _as_matrix(m, "matrix")
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"matrix must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotSPDError("matrix has non-finite entries")
    asym = np.max(np.abs(m - m.T)) if m.size else 0.0
    if asym >= tol:
        raise NotSPDError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    m = 0.5 * (m + m.T)
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise NotSPDError("matrix is not positive definite (Cholesky failed)") from None
    return _frozen(m, 2)


@dataclass(frozen=True)
class ParamTuple:
    """One ensemble member ``(A, Gamma, R, Q)``."""

    A: np.ndarray
    Gamma: np.ndarray
    R: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got shape {A.shape}")
        object.__setattr__(self, "A", _frozen(A, 2))
        for name in ("Gamma", "R", "Q"):
            object.__setattr__(self, name, spd_check(getattr(self, name)))
        if self.Gamma.shape != A.shape:
            raise DimensionError(f"Gamma has shape {self.Gamma.shape}, expected {A.shape}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @property
    def r(self) -> int:
        return self.Q.shape[0]

    def blocks(self):
        return (self.A, self.Gamma, self.R, self.Q)


def tuple_norm(a: ParamTuple, b: ParamTuple, p: int = 1) -> float:
    """Distance ``||S_a - S_b||_p`` with Frobenius norms on each block."""
    if p < 1:
        raise ValueError("p must be >= 1")
    norms = []
    for x, y in zip(a.blocks(), b.blocks()):
        if x.shape != y.shape:
            raise DimensionError(f"block shapes differ: {x.shape} vs {y.shape}")
        norms.append(np.linalg.norm(x - y, "fro"))
    norms = np.asarray(norms)
    if np.isinf(p):
        return float(norms.max())
    return float(np.sum(norms**p) ** (1.0 / p))


class ConstantForcing:
    """Known time-independent input ``f(t) = value``."""

    def __init__(self, value):
        self.value = _frozen(value, 1, "forcing")

    def __call__(self, t):
        return self.value

    def __repr__(self):
        return f"ConstantForcing({self.value.tolist()})"


@dataclass(frozen=True)
class Ensemble:
    """``N`` parameter tuples sharing ``B``, ``C``, ``x0`` and an optional forcing.

    Members carry uniform weight ``1/N``.  ``forcing`` is any callable
    ``t -> n-vector`` (or ``None`` for zero input).
    """

    members: tuple
    B: np.ndarray
    C: np.ndarray
    x0: np.ndarray
    forcing: Optional[Callable] = None

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise DimensionError("ensemble needs at least one member")
        object.__setattr__(self, "members", members)
        B = _frozen(_as_matrix(self.B, "B"), 2)
        C = _frozen(_as_matrix(self.C, "C"), 2)
        x0 = _frozen(np.atleast_1d(self.x0), 1, "x0")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "x0", x0)
        n, m, r = x0.shape[0], B.shape[1], C.shape[0]
        if B.shape[0] != n or C.shape[1] != n:
            raise DimensionError(f"B {B.shape} / C {C.shape} inconsistent with n={n}")
        for k, mem in enumerate(members):
            if (mem.n, mem.m, mem.r) != (n, m, r):
                raise DimensionError(
                    f"member {k} has dims (n,m,r)={(mem.n, mem.m, mem.r)}, expected {(n, m, r)}"
                )
        if self.forcing is not None and not callable(self.forcing):
            object.__setattr__(self, "forcing", ConstantForcing(self.forcing))

    @property
    def N(self) -> int:
        return len(self.members)

    @property
    def n(self) -> int:
        return self.x0.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def r(self) -> int:
        return self.C.shape[0]

    def forcing_at(self, t) -> np.ndarray:
        if self.forcing is None:
            return np.zeros(self.n)
        return np.asarray(self.forcing(t), dtype=float)

    def subset(self, indices: Sequence[int]) -> "Ensemble":
        return Ensemble(
            tuple(self.members[i] for i in indices), self.B, self.C, self.x0, self.forcing
        )

    def stacked(self):
        """Member blocks stacked along a leading axis: ``(A, Gamma, R, Q)``."""
        return tuple(np.stack([getattr(m, f) for m in self.members]) for f in ("A", "Gamma", "R", "Q"))


@dataclass(frozen=True)
class TimeGrid:
    """Equidistant grid ``0 = t_0 < ... < t_M = t_end``."""

    t_end: float
    num_intervals: int
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.t_end > 0:
            raise GridError("t_end must be positive")
        if int(self.num_intervals) != self.num_intervals or self.num_intervals < 1:
            raise GridError("num_intervals must be a positive integer")
        object.__setattr__(self, "t_end", float(self.t_end))
        object.__setattr__(self, "num_intervals", int(self.num_intervals))
        pts = self.t_end * np.arange(self.num_intervals + 1) / self.num_intervals
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def dt(self) -> float:
        return self.t_end / self.num_intervals

    def __len__(self):
        return self.num_intervals + 1

    def index_of(self, t: float) -> int:
        """Index of grid time ``t``; raises :class:`GridError` off the grid."""
        s = t / self.dt
        i = int(round(s))
        if i < 0 or i > self.num_intervals or abs(s - i) > 1e-9:
            raise GridError(f"t={t!r} is not a grid point")
        return i

    def locate(self, t: float):
        """Interval index and local fraction for ``t`` in ``[0, t_end]``."""
        if not (-1e-12 * self.t_end <= t <= self.t_end * (1 + 1e-12)):
            raise GridError(f"t={t!r} outside [0, {self.t_end}]")
        s = t / self.dt
        i = min(max(int(np.floor(s)), 0), self.num_intervals - 1)
        return i, s - i


@dataclass(frozen=True)
class Signal:
    """Grid values of a vector-valued function, linearly interpolated in between."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != len(self.grid):
            raise DimensionError(
                f"signal values must have shape ({len(self.grid)}, d), got {v.shape}"
            )
        object.__setattr__(self, "values", _frozen(v, 2))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __call__(self, t: float) -> np.ndarray:
        return signal_eval(self, t)

    @classmethod
    def from_function(cls, grid: TimeGrid, fn) -> "Signal":
        return cls(grid, np.array([np.atleast_1d(fn(t)) for t in grid.points]))

    @classmethod
    def constant(cls, grid: TimeGrid, value) -> "Signal":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(value, (len(grid), 1)))


def signal_eval(s: Signal, t: float) -> np.ndarray:
    """Piecewise-linear evaluation; exact at grid points."""
    i, w = s.grid.locate(t)
    if w == 0.0:
        return s.values[i].copy()
    if w == 1.0:
        return s.values[i + 1].copy()
    return (1.0 - w) * s.values[i] + w * s.values[i + 1]
