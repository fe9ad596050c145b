"""Exception types shared across the package."""


class SpillScmError(Exception):
    """Base class for all package errors."""


class ConfigError(SpillScmError):
    """Invalid run configuration (bad flags, bad config file, missing inputs)."""


class DataValidationError(SpillScmError):
    """Panel, weight, or artifact data violates a documented contract."""


class SingularSystemError(SpillScmError):
    """The identification system is singular or numerically unusable.

    Carries the offending reciprocal condition number so callers can report
    how close to singular the system was.
    """

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class SamplerDivergenceError(SpillScmError):
    """An MCMC chain produced a non-finite or runaway state."""

    def __init__(self, message, iteration=None, state_dump=None):
        super().__init__(message)
        self.iteration = iteration
        self.state_dump = state_dump
