"""Exception hierarchy for the ssde package."""


class SsdeError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(SsdeError, ValueError):
    """An argument violates a documented precondition."""


class InsufficientSampleError(SsdeError):
    """A statistic was requested from too small an ensemble."""


class SchemeError(SsdeError):
    """Coefficient evaluation failed during integration.

    Carries the step index at which the failure occurred.
    """

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class ScaledOverflowError(SsdeError, OverflowError):
    """A special-function value exceeds float range.

    ``log_value`` holds the natural logarithm of the unrepresentable result
    so callers can keep working in log space.
    """

    def __init__(self, message, log_value):
        super().__init__(message)
        self.log_value = float(log_value)


class TransformError(SsdeError):
    """A scale/time-change construction failed; names the offending integral."""


class ReductionError(SsdeError):
    """The reduction to reflected Brownian motion hit a degenerate clock."""


class OutOfClockError(SsdeError):
    """A time-change inverse was queried beyond the simulated clock range."""
