import numpy as np
import pytest

from riskfilter.exceptions import DimensionError, NotSPDError
from riskfilter.model import Ensemble, ParamTuple, TimeGrid
from riskfilter.scenarios import ScenarioConfig, build, oscillator_matrix
from riskfilter.synth import NOISE_STREAM, PARAMETER_STREAM, NoiseConfig, gaussian_draw, rng_stream, synthesize


def oscillator_ensemble():
    m = ParamTuple(oscillator_matrix(1.0), 0.1 * np.eye(2), [[0.05]], [[0.05]])
    return Ensemble((m,), [[0.0], [1.0]], [[1.0, 0.0]], [1.0, 0.0])


class TestGaussianDraw:
    def test_identity_mean(self):
        z = gaussian_draw(rng_stream(0, 5), np.eye(3), 100_000)
        assert np.all(np.abs(z.mean(axis=0)) <= 4 / np.sqrt(100_000))

    def test_scalar_variance(self):
        z = gaussian_draw(rng_stream(1, 5), [[4.0]], 10_000)
        assert z.var() == pytest.approx(4.0, rel=0.1)

    def test_covariance_reproduced(self):
        cov = np.array([[2.0, 0.6], [0.6, 1.0]])
        L = np.linalg.cholesky(cov)
        np.testing.assert_allclose(L @ L.T, cov, atol=1e-12)
        z = gaussian_draw(rng_stream(2, 5), cov, 200_000)
        np.testing.assert_allclose(np.cov(z.T), cov, atol=0.02)

    def test_zero_covariance_consumes_nothing(self):
        g1, g2 = rng_stream(3, 5), rng_stream(3, 5)
        assert not np.any(gaussian_draw(g1, np.zeros((2, 2)), 4))
        assert g1.random() == g2.random()

    def test_streams_independent_and_reproducible(self):
        a = rng_stream(9, PARAMETER_STREAM).random(5)
        b = rng_stream(9, NOISE_STREAM).random(5)
        assert not np.allclose(a, b)
        np.testing.assert_array_equal(a, rng_stream(9, PARAMETER_STREAM).random(5))

    def test_bad_seed(self):
        with pytest.raises(ValueError):
            rng_stream(-1, 0)


class TestNoiseConfig:
    def test_rejects_indefinite(self):
        with pytest.raises(NotSPDError):
            NoiseConfig(0, [[1.0, 2.0], [2.0, 1.0]], [[1.0]], [[1.0]], 0)

    def test_scaled(self):
        nc = NoiseConfig(0, np.eye(2), [[1.0]], [[2.0]], 0).scaled(0.5)
        assert nc.Q[0, 0] == 1.0 and nc.Gamma[1, 1] == 0.5


class TestSynthesize:
    def test_zero_noise_is_nominal(self):
        ens = oscillator_ensemble()
        grid = TimeGrid(5.0, 500)
        truth = synthesize(ens, grid, NoiseConfig(0, np.zeros((2, 2)), [[0.0]], [[0.0]], 0))
        assert not np.any(truth.eta) and not np.any(truth.v.values) and not np.any(truth.mu.values)
        # nominal solution of the damped oscillator x'' + x' + x = 0, x(0)=1, x'(0)=0
        t = grid.points
        w = np.sqrt(3) / 2
        exact = np.exp(-t / 2) * (np.cos(w * t) + np.sin(w * t) / (2 * w))
        np.testing.assert_allclose(truth.x_true.values[:, 0], exact, atol=1e-10)
        np.testing.assert_allclose(truth.y.values[:, 0], truth.x_true.values[:, 0], atol=0)

    def test_same_seed_bitwise(self):
        ens = oscillator_ensemble()
        grid = TimeGrid(5.0, 200)
        nc = NoiseConfig(11, 0.1 * np.eye(2), [[0.05]], [[0.05]], 0)
        a, b = synthesize(ens, grid, nc), synthesize(ens, grid, nc)
        for f in ("x_true", "y", "v", "mu"):
            np.testing.assert_array_equal(getattr(a, f).values, getattr(b, f).values)
        np.testing.assert_array_equal(a.eta, b.eta)
        c = synthesize(ens, grid, NoiseConfig(12, 0.1 * np.eye(2), [[0.05]], [[0.05]], 0))
        assert not np.array_equal(a.y.values, c.y.values)

    def test_measurement_noise_variance(self):
        cfg = ScenarioConfig(seed=2)
        setup = build(cfg)
        truth = synthesize(setup.ensemble, cfg.grid(), setup.noise)
        assert truth.mu.values.var() == pytest.approx(0.05, rel=0.2)
        assert np.all(np.abs(truth.y.values) < 10)

    def test_dimension_checks(self):
        ens = oscillator_ensemble()
        with pytest.raises(DimensionError):
            synthesize(ens, TimeGrid(1.0, 10), NoiseConfig(0, np.eye(3), [[1.0]], [[1.0]], 0))
        with pytest.raises(DimensionError):
            synthesize(ens, TimeGrid(1.0, 10), NoiseConfig(0, np.eye(2), [[1.0]], [[1.0]], 4))
