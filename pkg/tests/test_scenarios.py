import math

import numpy as np
import pytest

from riskfilter.exceptions import ConfigError
from riskfilter.scenarios import (
    DEFAULT_THETAS,
    GaussianMixtureSampler,
    LogNormalSampler,
    RiskReport,
    ScenarioConfig,
    UniformSampler,
    amplidyne_matrix,
    build,
    improvement_stats,
    oscillator_matrix,
    relative_improvement,
    run_scenario,
    sampler_from_dict,
)
from riskfilter.synth import rng_stream


class TestSamplers:
    def test_uniform_bounds(self):
        s = UniformSampler((0.1,), (3.0,))
        x = s.sample(rng_stream(0, 0), 1000)
        assert x.shape == (1000, 1) and x.min() >= 0.1 and x.max() < 3.0

    def test_lognormal_log_moments(self):
        s = LogNormalSampler((-0.25,), (0.5,))
        x = s.sample(rng_stream(0, 0), 50_000)
        assert np.all(x > 0)
        assert np.log(x).mean() == pytest.approx(-0.25, abs=0.02)
        assert np.log(x).var() == pytest.approx(0.5, rel=0.03)

    def test_lognormal_std_reading(self):
        s = LogNormalSampler((0.0,), (0.5,), spread="std")
        assert np.log(s.sample(rng_stream(1, 0), 50_000)).std() == pytest.approx(0.5, rel=0.03)

    def test_mixture_clusters(self):
        s = GaussianMixtureSampler((0.95, 0.05), ((15.0, 35.0), (35.0, 15.0)), (2 * np.eye(2), np.eye(2)))
        x = s.sample(rng_stream(0, 0), 20_000)
        second = x[:, 0] > x[:, 1]
        assert second.mean() == pytest.approx(0.05, abs=0.01)
        np.testing.assert_allclose(x[~second].mean(axis=0), [15, 35], atol=0.1)
        np.testing.assert_allclose(x[second].mean(axis=0), [35, 15], atol=0.2)

    @pytest.mark.parametrize(
        "d",
        [
            {"kind": "uniform", "low": [1.0], "high": [0.5]},
            {"kind": "lognormal", "mean": [0.0], "var": [-1.0]},
            {"kind": "gaussian_mixture", "weights": [1.0], "means": [[0.0]], "covs": [[[-1.0]]]},
            {"kind": "beta"},
            {"kind": "uniform", "lo": [0.0]},
        ],
    )
    def test_invalid(self, d):
        with pytest.raises(ConfigError):
            sampler_from_dict(d)

    @pytest.mark.parametrize("kind", ["uniform", "lognormal", "gaussian_mixture"])
    def test_dict_round_trip(self, kind):
        d = {
            "uniform": {"kind": "uniform", "low": [0.1], "high": [3.0]},
            "lognormal": {"kind": "lognormal", "mean": [-0.25], "var": [0.5]},
            "gaussian_mixture": {"kind": "gaussian_mixture", "weights": [1.0], "means": [[1.0]], "covs": [[[1.0]]]},
        }[kind]
        s = sampler_from_dict(d)
        assert sampler_from_dict(s.to_dict()) == s


class TestPresets:
    def test_oscillator_matrix(self):
        np.testing.assert_array_equal(oscillator_matrix(1.0), [[0.0, 1.0], [-1.0, -1.0]])

    def test_oscillator_build(self):
        setup = build(ScenarioConfig(seed=3))
        assert setup.ensemble.N == 100
        assert setup.true_member == int(np.argmax(setup.params[:, 0]))
        assert setup.params.min() >= 0.1 and setup.params.max() <= 3.0

    def test_amplidyne_matrix(self):
        A = amplidyne_matrix(20.0, 20.0)
        assert A[1, 0] == 1.0 and A[1, 1] == -0.5 and A[3, 2] == 1.0 and A[3, 3] == -0.5

    def test_amplidyne_build(self):
        setup = build(ScenarioConfig(preset="amplidyne", seed=3))
        np.testing.assert_allclose(np.diag(setup.noise.Gamma), [0.125, 0.25, 2.5, 5.0])
        np.testing.assert_allclose(np.diag(setup.noise.Gamma), 0.25 * np.abs(setup.ensemble.x0))
        diff = setup.params[:, 0] - setup.params[:, 1]
        assert setup.true_member == int(np.argmax(diff))

    def test_custom_preset(self):
        cfg = ScenarioConfig(
            preset="custom",
            custom={"A": [[[-1.0]], [[-2.0]]], "B": [[1.0]], "C": [[1.0]], "x0": [0.0], "t_end": 1.0},
            num_intervals=10,
        )
        setup = build(cfg)
        assert setup.ensemble.N == 2 and cfg.grid().t_end == 1.0


class TestConfig:
    def test_theta_defaults(self):
        assert ScenarioConfig().theta_list == DEFAULT_THETAS
        assert ScenarioConfig(preset="amplidyne").theta_list == (4.0,)

    def test_theta_normalization(self):
        cfg = ScenarioConfig(theta_list=(20, 0, 0.5, math.inf, 20))
        assert cfg.theta_list == (0.5, 20.0)
        assert cfg.labels == (0.0, 0.5, 20.0, math.inf)

    def test_dict_round_trip(self):
        cfg = ScenarioConfig(seed=4, theta_list=(1.0, 2.0), sampler={"kind": "lognormal", "mean": [0.0], "var": [1.0]})
        assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize(
        "d",
        [{"colour": 1}, {"N_A": 0}, {"preset": "pendulum"}, {"theta_list": [-1.0]}, {"seed": -3}, {"substeps": 0}],
    )
    def test_rejected(self, d):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict(d)

    def test_replace(self):
        assert ScenarioConfig().replace(seed=9).seed == 9


class TestImprovement:
    def test_equal_cells(self):
        assert relative_improvement(5.0, 5.0) == 0.0

    def test_reported_percentages(self):
        assert relative_improvement(10.589, 9.4986) == pytest.approx(0.103, abs=5e-4)
        assert relative_improvement(38.15, 11.945) == pytest.approx(0.687, abs=5e-4)

    def test_stats_from_report(self):
        cells = np.array([[1.0, 1.2, 1.3], [2.0, 1.5, 1.6], [10.0, 6.0, 5.0]])
        rep = RiskReport((0.0, 5.0, math.inf), (0.0, 5.0, math.inf), cells, np.linspace(0, 1, 3))
        st = improvement_stats(rep)
        assert st.theta_max == 5.0
        assert st.esssup_improvement == pytest.approx(0.4)
        assert st.expectation_penalty == pytest.approx(0.2 / 1.2)


def test_single_member_scenario_is_degenerate():
    res = run_scenario(ScenarioConfig(N_A=1, num_intervals=100, theta_list=(1.0,), seed=2))
    xs = [e.x for e in res.estimators.values()]
    for x in xs[1:]:
        np.testing.assert_allclose(x, xs[0], atol=1e-9)
    from scipy.integrate import trapezoid

    expected = trapezoid(res.bank.r[:, 0], res.bank.grid.points)
    np.testing.assert_allclose(res.report.cells, expected, rtol=1e-9)


def test_small_scenario_report_shape_and_diagonal():
    res = run_scenario(ScenarioConfig(N_A=20, num_intervals=200, theta_list=(0.5, 20.0), seed=6))
    rep = res.report
    assert rep.cells.shape == (4, 4) and res.converged
    for tau in rep.levels:
        row = rep.row(tau)
        assert row[rep.labels.index(tau)] <= row.min() + 1e-10 * (1 + row.min())
    assert np.all(np.diff(rep.cells, axis=0) >= -1e-12)
