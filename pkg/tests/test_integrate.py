import math

import numpy as np
import pytest

from riskfilter.exceptions import IntegrationError
from riskfilter.integrate import IntegratorConfig, convergence_order, rk4_path, rk4_step
from riskfilter.model import TimeGrid


def test_zero_rhs_keeps_constant():
    path = rk4_path(lambda t, x: np.zeros_like(x), np.array([1.5, -2.0]), TimeGrid(1.0, 10))
    np.testing.assert_array_equal(path, np.tile([1.5, -2.0], (11, 1)))


def test_exponential():
    path = rk4_path(lambda t, x: x, np.array([1.0]), TimeGrid(1.0, 100), IntegratorConfig(10))
    assert path[-1, 0] == pytest.approx(math.e, rel=1e-9)


def test_separable_time_dependent():
    grid = TimeGrid(2.0, 50)
    path = rk4_path(lambda t, x: -x / (1.0 + t), np.array([1.0]), grid)
    np.testing.assert_allclose(path[:, 0], 1.0 / (1.0 + grid.points), atol=1e-8)


def test_matrix_state_and_projection():
    calls = []

    def project(S):
        calls.append(1)
        return 0.5 * (S + S.T)

    path = rk4_path(lambda t, S: -S, np.eye(2), TimeGrid(1.0, 5), IntegratorConfig(2), project)
    assert path.shape == (6, 2, 2) and len(calls) == 10
    np.testing.assert_allclose(path[-1], np.exp(-1.0) * np.eye(2), rtol=1e-6)


def test_order_four():
    est = convergence_order(lambda t, x: x, np.array([1.0]), TimeGrid(1.0, 4), substeps=(2, 4, 8))
    assert not est.indeterminate
    assert est.order == pytest.approx(4.0, abs=0.3)


def test_kink_degrades_order():
    # the kink sits off every substep lattice used below
    kink = 0.3141592653589793

    def rhs(t, x):
        return np.where(t < kink, 1.0, -1.0) * np.ones_like(x) + x * 0.0

    est = convergence_order(rhs, np.array([0.0]), TimeGrid(1.0, 1), substeps=(5, 10, 20))
    assert est.order < 3.0


def test_polynomial_is_indeterminate():
    est = convergence_order(lambda t, x: np.array([3.0 * t**2]), np.array([0.0]), TimeGrid(1.0, 3))
    assert est.indeterminate and math.isnan(est.order)


def test_nonfinite_raises_with_time():
    with pytest.raises(IntegrationError) as info, np.errstate(over="ignore", invalid="ignore"):
        rk4_path(lambda t, x: x**2, np.array([1.0]), TimeGrid(2.0, 20))
    assert 0.0 < info.value.time <= 2.0


def test_rk4_step_exact_on_cubic():
    assert rk4_step(lambda t, x: 4.0 * t**3, 0.0, 0.0, 1.0) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("bad", [0, -1, 1.5])
def test_invalid_substeps(bad):
    with pytest.raises(ValueError):
        IntegratorConfig(bad)
