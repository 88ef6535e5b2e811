"""Exception types shared across the package."""


class SpreadSampError(Exception):
    """Base class for all library errors."""


class ParameterError(SpreadSampError, ValueError):
    """A caller-supplied parameter violates an operation's preconditions."""


class FrameFormatError(SpreadSampError, ValueError):
    """A frame file does not conform to the declared schema."""


class DegenerateFrameError(SpreadSampError):
    """The frame geometry cannot support the requested operation
    (duplicate coordinates, singular covariance, degenerate trend)."""


class ConvergenceError(SpreadSampError):
    """Iterative balancing did not reach the requested tolerance.

    Carries the worst row residual so callers can decide whether to raise
    max_iter or lower gamma.
    """

    def __init__(self, message, worst_residual):
        super().__init__(message)
        self.worst_residual = worst_residual


class NumericDegeneracyError(SpreadSampError):
    """Selection probabilities collapsed numerically (extreme gamma)."""


class EstimatorUndefinedError(SpreadSampError):
    """An estimator's defining quantities are unavailable (e.g. pi <= 0)."""


class VarianceInestimableError(EstimatorUndefinedError):
    """A sampled pair has a non-positive joint inclusion probability."""

    def __init__(self, message, pair):
        super().__init__(message)
        self.pair = pair


class InsufficientDataError(SpreadSampError):
    """Too few usable data points for a fit."""


class InternalInvariantError(SpreadSampError):
    """An internal state invariant was violated; aborts the draw (bug guard)."""
