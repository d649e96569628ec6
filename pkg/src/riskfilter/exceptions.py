"""Exception types raised by riskfilter."""


class RiskFilterError(Exception):
    """Base class for all package errors."""


class DimensionError(RiskFilterError, ValueError):
    """Matrix or vector shapes are inconsistent."""


class NotSPDError(RiskFilterError, ValueError):
    """A matrix expected to be symmetric positive definite is not."""


class GridError(RiskFilterError, ValueError):
    """A time lies outside the grid or off the grid points."""


class IntegrationError(RiskFilterError, RuntimeError):
    """The ODE state became non-finite."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class FilterError(RiskFilterError, RuntimeError):
    """A Kalman-Bucy filter run failed (loss of definiteness, blow-up)."""

    def __init__(self, message, member=None, time=None):
        super().__init__(message)
        self.member = member
        self.time = time


class OracleError(RiskFilterError, RuntimeError):
    """A brute-force oracle could not bracket its answer."""


class ConfigError(RiskFilterError, ValueError):
    """A scenario or command-line configuration is invalid."""
