"""Exception types raised by the simulator."""


class SimulationError(Exception):
    """Base class for simulator errors."""


class DegenerateSystemError(SimulationError):
    """A linear system that must be solved is numerically singular."""


class InvalidGeometryError(SimulationError):
    """Sensing geometry outside the validity range of the closed-form models."""


class InfeasibleCommandError(SimulationError):
    """A command violates the speed/heading rate limits."""


class DegenerateCovarianceError(SimulationError):
    """A covariance matrix is singular where a positive-definite one is required."""


class InsufficientBufferError(SimulationError):
    """Replay buffer holds fewer experiences than a training batch needs."""


class AssumptionViolation(SimulationError):
    """C&C latency does not fit inside one slot."""


class ConfigError(SimulationError):
    """Configuration file could not be parsed or failed validation."""

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line
