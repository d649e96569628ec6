import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from riskfilter import risk
from riskfilter.kalman import run_bank
from riskfilter.model import Ensemble, ParamTuple, Signal, TimeGrid
from riskfilter.oracle import finite_diff
from riskfilter.risk import RiskSpec, entropic_risk, rho, rho_bounds_check

energy_vectors = arrays(
    float, st.integers(1, 40), elements=st.floats(0, 1e4, allow_nan=False, allow_infinity=False)
)
thetas = st.floats(1e-4, 1e4)


def random_members(gen, N, n):
    xhat = gen.standard_normal((N, n))
    a = gen.standard_normal((N, n, n))
    P = a @ np.swapaxes(a, -1, -2) + 0.5 * np.eye(n)
    r = gen.exponential(1.0, N)
    return xhat, P, r


class TestRho:
    @pytest.mark.parametrize("level", [0.0, 0.3, 50.0, math.inf])
    def test_constant_vector(self, level):
        assert rho(RiskSpec.from_level(level), np.full(7, 3.25)) == pytest.approx(3.25, abs=1e-14)

    def test_two_point_value(self):
        assert rho(RiskSpec.entropic(1.0), [0.0, 1.0]) == pytest.approx(math.log((1 + math.e) / 2), rel=1e-14)
        assert math.log((1 + math.e) / 2) == pytest.approx(0.620115, abs=1e-6)

    def test_no_overflow_near_large_values(self):
        v = np.array([1e6, 1e6 - 0.5, 1e6 - 3.0])
        val = rho(RiskSpec.entropic(1000.0), v)
        shifted = v.max() + math.log(np.mean(np.exp(1000.0 * (v - v.max())))) / 1000.0
        assert math.isfinite(val) and val == pytest.approx(shifted, rel=1e-15)

    def test_single_member_is_max(self):
        assert rho(RiskSpec.entropic(0.7), [4.5]) == 4.5

    def test_large_theta_close_to_max(self):
        v = np.random.default_rng(1).uniform(0, 10, 25)
        assert v.max() - rho(RiskSpec.entropic(1e6), v) <= math.log(25) / 1e6 + 1e-12

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            RiskSpec.entropic(0.0)
        with pytest.raises(ValueError):
            RiskSpec.entropic(math.inf)
        with pytest.raises(ValueError):
            RiskSpec("median")
        with pytest.raises(ValueError):
            rho(RiskSpec.expectation(), np.array([]))

    def test_levels_round_trip(self):
        for tau in (0.0, 2.5, math.inf):
            assert RiskSpec.from_level(tau).level == tau

    def test_vectorized_axis(self):
        v = np.arange(12.0).reshape(3, 4)
        out = rho(RiskSpec.entropic(0.5), v, axis=-1)
        assert out.shape == (3,)
        assert out[1] == pytest.approx(rho(RiskSpec.entropic(0.5), v[1]))


class TestRiskProperties:
    @given(energy_vectors, thetas)
    def test_sandwich(self, v, theta):
        lo, hi = rho_bounds_check(v, theta, atol=1e-12 * (1 + v.max()))
        assert lo and hi

    @given(energy_vectors, thetas, st.floats(-1e3, 1e3))
    def test_translation(self, v, theta, c):
        a = entropic_risk(v + c, theta)
        b = entropic_risk(v, theta) + c
        assert a == pytest.approx(b, abs=1e-9 * (1 + abs(c) + v.max()))

    @given(energy_vectors, thetas, thetas)
    def test_monotone_in_theta(self, v, t1, t2):
        lo, hi = sorted((t1, t2))
        assert entropic_risk(v, lo) <= entropic_risk(v, hi) + 1e-12 * (1 + v.max())

    @given(energy_vectors)
    def test_between_mean_and_max(self, v):
        val = entropic_risk(v, 0.3)
        tol = 1e-12 * (1 + v.max())
        assert v.mean() - tol <= val <= v.max() + tol

    @given(arrays(float, 10, elements=st.floats(0, 10)))
    def test_small_theta_tends_to_mean(self, v):
        assert entropic_risk(v, 1e-9) == pytest.approx(v.mean(), abs=1e-6)

    @given(energy_vectors, thetas)
    def test_softmax_is_distribution(self, v, theta):
        c = risk.softmax_weights(theta, v)
        assert np.all(c >= 0) and c.sum() == pytest.approx(1.0)
        assert c[np.argmax(v)] == c.max()


class TestEnergyDerivatives:
    def test_direct_two_member_evaluation(self):
        xhat = np.array([[0.5], [-1.0]])
        P = np.array([[[2.0]], [[0.5]]])
        r = np.array([0.3, 1.1])
        x = np.array([0.2])
        V = np.array([2.0 * 0.3**2 + 0.3, 0.5 * 1.2**2 + 1.1])
        direct = math.log(0.5 * (math.exp(0.8 * V[0]) + math.exp(0.8 * V[1]))) / 0.8
        assert risk.objective(xhat, P, r, x, 0.8) == pytest.approx(direct, rel=1e-14)

    def test_single_member_gradient_and_hessian(self, rng):
        xhat, P, r = random_members(rng, 1, 3)
        x = rng.standard_normal(3)
        np.testing.assert_allclose(risk.gradient(xhat, P, r, x, 2.0), 2 * P[0] @ (x - xhat[0]), rtol=1e-13)
        np.testing.assert_allclose(risk.hessian(xhat, P, r, x, 2.0), 2 * P[0], rtol=1e-13)

    def test_zero_gradient_at_common_center(self, rng):
        _, P, _ = random_members(rng, 5, 2)
        xhat = np.tile([0.3, -0.4], (5, 1))
        g = risk.gradient(xhat, P, np.full(5, 0.7), np.array([0.3, -0.4]), 3.0)
        np.testing.assert_allclose(g, 0.0, atol=1e-15)

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
    def test_gradient_matches_finite_differences(self, seed, theta):
        gen = np.random.default_rng(seed)
        xhat, P, r = random_members(gen, 6, 2)
        x = gen.standard_normal(2)
        g = risk.gradient(xhat, P, r, x, theta)
        assume(np.linalg.norm(g) > 1e-3)
        fd = finite_diff(lambda z: risk.objective(xhat, P, r, z, theta), x).value
        assert np.linalg.norm(fd - g) <= 1e-5 * np.linalg.norm(g)

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
    def test_hessian_matches_finite_differences(self, seed, theta):
        gen = np.random.default_rng(seed)
        xhat, P, r = random_members(gen, 6, 2)
        x = gen.standard_normal(2)
        H = risk.hessian(xhat, P, r, x, theta)
        fd = finite_diff(lambda z: risk.gradient(xhat, P, r, z, theta), x, mode="jacobian").value
        assert np.linalg.norm(fd - H) <= 1e-4 * np.linalg.norm(H)

    def test_hessian_positive_definite(self, rng):
        for _ in range(100):
            xhat, P, r = random_members(rng, int(rng.integers(1, 20)), 3)
            theta = float(np.exp(rng.uniform(-5, 7)))
            H = risk.hessian(xhat, P, r, 3 * rng.standard_normal(3), theta)
            np.linalg.cholesky(H)

    @given(st.integers(0, 2**32 - 1))
    def test_fixed_point_at_minimizer_of_quadratic_mix(self, seed):
        gen = np.random.default_rng(seed)
        xhat, P, _ = random_members(gen, 4, 2)
        w = gen.dirichlet(np.ones(4))
        x = risk.weighted_center(xhat, P, w)
        grad = np.einsum("k,kij,kj->i", w, P, x - xhat)
        np.testing.assert_allclose(grad, 0.0, atol=1e-10 * (1 + np.abs(xhat).max() * np.abs(P).max()))


@pytest.fixture(scope="module")
def small_bank():
    grid = TimeGrid(1.0, 20)
    members = tuple(ParamTuple([[a]], [[1.0]], [[0.5]], [[0.2]]) for a in (-1.0, 0.0, 0.5))
    ens = Ensemble(members, [[1.0]], [[1.0]], [0.2])
    return run_bank(ens, Signal.from_function(grid, lambda t: [np.sin(3 * t)]), grid)


def test_bank_wrappers(small_bank):
    t, x = 0.5, np.array([0.1])
    i = small_bank.grid.index_of(t)
    xhat, P, r = small_bank.snapshot(i)
    assert risk.entropic_objective(small_bank, 2.0, t, x) == pytest.approx(float(risk.objective(xhat, P, r, x, 2.0)))
    np.testing.assert_allclose(risk.entropic_gradient(small_bank, 2.0, t, x), risk.gradient(xhat, P, r, x, 2.0))
    np.testing.assert_allclose(risk.entropic_hessian(small_bank, 2.0, t, x), risk.hessian(xhat, P, r, x, 2.0))
    assert risk.entropic_weights(small_bank, 2.0, t, x).sum() == pytest.approx(1.0)


def test_single_member_bank_objective_is_energy():
    grid = TimeGrid(1.0, 10)
    m = ParamTuple([[0.2]], [[1.0]], [[0.5]], [[0.2]])
    bank = run_bank(Ensemble((m,), [[1.0]], [[1.0]], [0.0]), Signal.constant(grid, [1.0]), grid)
    i = 4
    x = np.array([0.9])
    V = float((x - bank.xhat[i, 0]) @ bank.P[i, 0] @ (x - bank.xhat[i, 0]) + bank.r[i, 0])
    assert risk.entropic_objective(bank, 5.0, grid.points[i], x) == pytest.approx(V, rel=1e-13)
