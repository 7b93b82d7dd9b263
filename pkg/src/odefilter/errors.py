"""Exception hierarchy shared by all solver components."""


class OdeFilterError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(OdeFilterError, ValueError):
    """Input arrays have the wrong shape or contain non-finite entries."""


class InvalidStepError(InvalidInputError):
    """A step size is non-positive or non-finite."""


class SingularInnovationError(OdeFilterError):
    """The innovation (measurement) covariance factor is numerically singular."""

    def __init__(self, message, **context):
        if context:
            details = ", ".join(f"{k}={v!r}" for k, v in context.items())
            message = f"{message} ({details})"
        super().__init__(message)
        self.context = context


class SingularPredictionError(SingularInnovationError):
    """The predicted covariance factor is numerically singular during smoothing."""


class DiscretizationOverflowError(OdeFilterError, OverflowError):
    """Discretised system matrices overflowed to non-finite values."""


class SingularSeriesError(OdeFilterError, ZeroDivisionError):
    """A truncated Taylor series with zero constant term was inverted."""


class FieldSingularityError(OdeFilterError, ZeroDivisionError):
    """The vector field was evaluated at one of its singular points."""


class InitialisationError(OdeFilterError):
    """Computing the initial derivative stack failed."""


class SolverError(OdeFilterError):
    """The solver loop aborted; ``partial`` holds the steps accepted so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class MinimumStepError(SolverError):
    pass


class MaxStepsError(SolverError):
    pass


class NonFiniteStateError(SolverError):
    pass


class OutOfRangeError(OdeFilterError, ValueError):
    """A dense-output query lies outside the solved interval."""


class ReferenceSolveError(OdeFilterError):
    """The Runge-Kutta reference solver failed."""


class IndefiniteCovarianceError(SolverError):
    """A covariance that must be positive definite could not be factorised."""
