import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from riskfilter import Ensemble, ParamTuple, TimeGrid

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def scalar_member(a=0.0, gamma=1.0, R=1.0, Q=1.0):
    return ParamTuple([[a]], [[gamma]], [[R]], [[Q]])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def scalar_ensemble():
    members = (scalar_member(-0.5), scalar_member(-0.2, 0.5), scalar_member(0.3, 2.0, 0.5, 0.2))
    return Ensemble(members, [[1.0]], [[1.0]], [0.7])


@pytest.fixture
def short_grid():
    return TimeGrid(1.0, 100)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
