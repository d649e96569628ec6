"""Risk-neutral and risk-averse Kalman-Bucy estimators for ensembles of linear systems."""

__version__ = "0.1.0"

from .estimate import (  # noqa: E402
    DescentConfig,
    EstimatorTrajectory,
    entropic_minimize,
    entropic_trajectory,
    risk_neutral,
    worst_case_trajectory,
)
from .integrate import IntegratorConfig  # noqa: E402
from .kalman import FilterBank, run_bank, run_filter  # noqa: E402
from .model import Ensemble, ParamTuple, Signal, TimeGrid  # noqa: E402
from .risk import RiskSpec, rho  # noqa: E402
from .scenarios import ScenarioConfig, run_scenario  # noqa: E402
from .synth import NoiseConfig, synthesize  # noqa: E402

__all__ = [
    "DescentConfig",
    "Ensemble",
    "EstimatorTrajectory",
    "FilterBank",
    "IntegratorConfig",
    "NoiseConfig",
    "ParamTuple",
    "RiskSpec",
    "ScenarioConfig",
    "Signal",
    "TimeGrid",
    "entropic_minimize",
    "entropic_trajectory",
    "rho",
    "risk_neutral",
    "run_bank",
    "run_filter",
    "run_scenario",
    "synthesize",
    "worst_case_trajectory",
]
