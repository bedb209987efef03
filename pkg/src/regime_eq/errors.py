"""Exception types raised across the package."""


class RegimeEqError(Exception):
    """Base class for all package errors."""


class DomainError(RegimeEqError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class RangeError(RegimeEqError, ValueError):
    """A time query falls outside the solved or admissible range."""


class NoStationaryDistributionError(RegimeEqError, ValueError):
    """The chain has no unique stationary distribution (both rates zero)."""


class SolverError(RegimeEqError, RuntimeError):
    """The ODE integrator failed (positivity loss or step-size underflow)."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class SimulationError(RegimeEqError, RuntimeError):
    """A simulated wealth value became non-finite."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class UnreachableRegimeError(RegimeEqError, ValueError):
    """Conditioning on a terminal regime that has zero probability."""


class ConfigError(RegimeEqError, ValueError):
    """A run configuration file or flag is invalid."""
