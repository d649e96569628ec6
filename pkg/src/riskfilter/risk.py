"""Risk functionals over ensemble energies and the entropic objective.

The entropic objective at a fixed time is

    F(x) = (1/theta) ln( (1/N) sum_k exp(theta V_k(x)) ),
    V_k(x) = |x - xhat_k|^2_{P_k} + r_k.

All functions on ``(xhat, P, r, x)`` broadcast over leading batch axes:
``xhat`` is ``(..., N, n)``, ``P`` is ``(..., N, n, n)``, ``r`` is
``(..., N)`` and ``x`` is ``(..., n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EXPECTATION = "expectation"
ENTROPIC = "entropic"
WORST_CASE = "worst_case"


@dataclass(frozen=True)
class RiskSpec:
    kind: str
    theta: float = float("nan")

    def __post_init__(self):
        if self.kind not in (EXPECTATION, ENTROPIC, WORST_CASE):
            raise ValueError(f"unknown risk kind {self.kind!r}")
        if self.kind == ENTROPIC and not (0.0 < self.theta < math.inf):
            raise ValueError("entropic risk needs 0 < theta < inf")

    @classmethod
    def expectation(cls):
        return cls(EXPECTATION)

    @classmethod
    def entropic(cls, theta):
        return cls(ENTROPIC, float(theta))

    @classmethod
    def worst_case(cls):
        return cls(WORST_CASE)

    @classmethod
    def from_level(cls, tau):
        """``0`` -> expectation, ``inf`` -> worst case, otherwise entropic."""
        tau = float(tau)
        if tau == 0.0:
            return cls.expectation()
        if math.isinf(tau):
            return cls.worst_case()
        return cls.entropic(tau)

    @property
    def level(self) -> float:
        if self.kind == EXPECTATION:
            return 0.0
        if self.kind == WORST_CASE:
            return math.inf
        return self.theta


def entropic_risk(values, theta, axis=-1):
    """``(1/theta) ln(mean(exp(theta * values)))`` without overflow.

    Written as ``max + log1p(mean(expm1(theta (v - max)))) / theta`` so the
    result is accurate both for huge ``theta`` and for ``theta -> 0``.
    """
    v = np.asarray(values, dtype=float)
    vmax = np.max(v, axis=axis, keepdims=True)
    s = np.mean(np.expm1(theta * (v - vmax)), axis=axis)
    return np.squeeze(vmax, axis=axis) + np.log1p(s) / theta


def rho(spec: RiskSpec, values, axis=-1):
    v = np.asarray(values, dtype=float)
    if v.shape[axis] == 0:
        raise ValueError("empty energy vector")
    if spec.kind == EXPECTATION:
        out = np.mean(v, axis=axis)
    elif spec.kind == WORST_CASE:
        out = np.max(v, axis=axis)
    else:
        out = entropic_risk(v, spec.theta, axis=axis)
    return float(out) if np.ndim(out) == 0 else out


def rho_bounds_check(values, theta, atol=1e-12):
    """Check ``max + ln(1/N)/theta <= rho_theta <= max``.

    Returns the pair ``(lower_ok, upper_ok)``.
    """
    v = np.asarray(values, dtype=float)
    vmax = float(np.max(v))
    val = rho(RiskSpec.entropic(theta), v)
    lower = vmax + math.log(1.0 / v.size) / theta
    return (val >= lower - atol, val <= vmax + atol)


def softmax_weights(theta, values, axis=-1):
    """Normalized ``exp(theta * values)``; max-shifted."""
    v = np.asarray(values, dtype=float)
    w = np.exp(theta * (v - np.max(v, axis=axis, keepdims=True)))
    return w / np.sum(w, axis=axis, keepdims=True)


def energies(xhat, P, r, x):
    """Member energies ``V_k(x)`` together with ``d_k = x - xhat_k`` and ``P_k d_k``."""
    d = np.asarray(x)[..., None, :] - xhat
    Pd = np.einsum("...kij,...kj->...ki", P, d)
    V = np.einsum("...ki,...ki->...k", d, Pd) + r
    return V, d, Pd


def objective(xhat, P, r, x, theta):
    V, _, _ = energies(xhat, P, r, x)
    return entropic_risk(V, theta)


def objective_and_gradient(xhat, P, r, x, theta):
    V, _, Pd = energies(xhat, P, r, x)
    c = softmax_weights(theta, V)
    g = 2.0 * np.einsum("...k,...ki->...i", c, Pd)
    return entropic_risk(V, theta), g, c


def gradient(xhat, P, r, x, theta):
    return objective_and_gradient(xhat, P, r, x, theta)[1]


def hessian(xhat, P, r, x, theta):
    V, _, Pd = energies(xhat, P, r, x)
    c = softmax_weights(theta, V)
    mean_Pd = np.einsum("...k,...ki->...i", c, Pd)
    H = 2.0 * np.einsum("...k,...kij->...ij", c, P)
    H = H + 4.0 * theta * (
        np.einsum("...k,...ki,...kj->...ij", c, Pd, Pd)
        - mean_Pd[..., :, None] * mean_Pd[..., None, :]
    )
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def fixed_point_map(xhat, P, r, x, theta):
    """``(sum c_k P_k)^{-1} sum c_k P_k xhat_k`` with softmax weights at ``x``."""
    V, _, _ = energies(xhat, P, r, x)
    c = softmax_weights(theta, V)
    return weighted_center(xhat, P, c)


def weighted_center(xhat, P, w):
    """``(sum w_k P_k)^{-1} sum w_k P_k xhat_k``."""
    S = np.einsum("...k,...kij->...ij", w, P)
    b = np.einsum("...k,...kij,...kj->...i", w, P, xhat)
    L = np.linalg.cholesky(S)
    z = np.linalg.solve(L, b[..., None])
    return np.linalg.solve(np.swapaxes(L, -1, -2), z)[..., 0]


def _bank_slice(bank, t):
    i = bank.grid.index_of(t)
    return bank.snapshot(i)


def entropic_objective(bank, theta, t, x) -> float:
    """Entropic risk of the ensemble energies at grid time ``t``."""
    return float(objective(*_bank_slice(bank, t), np.asarray(x, float), theta))


def entropic_gradient(bank, theta, t, x) -> np.ndarray:
    """``2 sum_k c_k P_k (x - xhat_k)`` with softmax weights ``c_k`` of ``theta V_k``."""
    return gradient(*_bank_slice(bank, t), np.asarray(x, float), theta)


def entropic_hessian(bank, theta, t, x) -> np.ndarray:
    return hessian(*_bank_slice(bank, t), np.asarray(x, float), theta)


def entropic_weights(bank, theta, t, x) -> np.ndarray:
    V, _, _ = energies(*_bank_slice(bank, t), np.asarray(x, float))
    return softmax_weights(theta, V)
