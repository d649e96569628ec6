"""Fixed-step classical RK4 on a measurement grid.

Each grid interval is split into ``substeps`` uniform RK4 steps, so kinks of
piecewise-linear inputs (which sit on grid points) never fall inside a step.
Matrix-valued states are integrated by flattening them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import IntegrationError
from .model import TimeGrid


@dataclass(frozen=True)
class IntegratorConfig:
    substeps: int = 10
    jacobian_check_tol: float = 1e-6

    def __post_init__(self):
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError("substeps must be a positive integer")
        object.__setattr__(self, "substeps", int(self.substeps))


def rk4_step(rhs, t, x, h):
    k1 = rhs(t, x)
    k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = rhs(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_path(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    x_init,
    grid: TimeGrid,
    cfg: Optional[IntegratorConfig] = None,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> np.ndarray:
    """Integrate ``x' = rhs(t, x)`` and return the states on every grid point.

    ``project`` (optional) is applied to the state after every RK4 step,
    e.g. to re-symmetrize a flattened covariance.  The returned array has
    shape ``(len(grid),) + x_init.shape`` and its first entry is ``x_init``.
    """
    cfg = cfg or IntegratorConfig()
    x = np.array(x_init, dtype=float, copy=True)
    out = np.empty((len(grid),) + x.shape)
    out[0] = x
    pts = grid.points
    ns = cfg.substeps
    for i in range(grid.num_intervals):
        t0 = pts[i]
        h = (pts[i + 1] - t0) / ns
        for j in range(ns):
            x = rk4_step(rhs, t0 + j * h, x, h)
            if project is not None:
                x = project(x)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(f"non-finite state at t={pts[i + 1]:.6g}", time=float(pts[i + 1]))
        out[i + 1] = x
    return out


@dataclass(frozen=True)
class OrderEstimate:
    order: float
    errors: tuple
    indeterminate: bool


def convergence_order(rhs, x_init, grid: TimeGrid, substeps=(5, 10, 20), roundoff=1e-13):
    """Richardson estimate of the observed order from three substep counts.

    Uses the successive differences of the terminal states.  When the
    differences are already at roundoff level the estimate is flagged
    ``indeterminate`` and ``order`` is ``nan``.
    """
    ends = [rk4_path(rhs, x_init, grid, IntegratorConfig(s))[-1] for s in substeps]
    scale = max(1.0, float(np.max(np.abs(ends[-1]))))
    e1 = float(np.max(np.abs(ends[0] - ends[1])))
    e2 = float(np.max(np.abs(ends[1] - ends[2])))
    if e2 <= roundoff * scale or e1 <= roundoff * scale:
        return OrderEstimate(float("nan"), (e1, e2), True)
    ratio = substeps[1] / substeps[0]
    return OrderEstimate(float(np.log(e1 / e2) / np.log(ratio)), (e1, e2), False)
