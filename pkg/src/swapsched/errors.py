"""Exception hierarchy shared across the package."""


class SwapschedError(Exception):
    """Base class for all package-specific errors."""


class TopologyError(SwapschedError):
    """Raised when a topology cannot be generated or is invalid."""


class RoutingError(SwapschedError):
    """Raised when a service route cannot be computed."""


class ModelConstructionError(SwapschedError):
    """Raised when queue/transition bookkeeping is inconsistent."""


class ParameterError(SwapschedError):
    """Raised on out-of-range physical or configuration parameters."""


class InfeasibleScheduleError(SwapschedError):
    """Raised by the ideal evolution when a schedule drains a queue below zero."""


class ProgramError(SwapschedError):
    """Raised when an integer program is malformed (unbounded variable, infeasible origin)."""


class SimulationError(SwapschedError):
    """Raised when a simulation run violates an internal conservation check."""


class ConfigError(SwapschedError):
    """Raised on configuration parse/validation failures; message carries the key path."""
