"""Exception hierarchy shared by every fracsde module."""


class FracSDEError(Exception):
    """Base class for all package errors."""


class DomainError(FracSDEError, ValueError):
    """An argument lies outside the domain of the operation."""


class ContractError(FracSDEError):
    """A documented precondition or postcondition does not hold."""


class QuadratureError(FracSDEError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, estimate=float("nan"), abserr=float("nan")):
        super().__init__(message)
        self.estimate = estimate
        self.abserr = abserr


class SeriesError(FracSDEError):
    """A series did not converge within its term cap."""

    def __init__(self, message, partial_sum=float("nan")):
        super().__init__(message)
        self.partial_sum = partial_sum


class DivergenceError(FracSDEError):
    """The discrete recursion produced a non-finite state."""

    def __init__(self, message, step=-1):
        super().__init__(message)
        self.step = step


class FitError(FracSDEError):
    """Not enough usable points for a log-log regression."""


class SizeError(FracSDEError):
    """The requested grid exceeds a configured size cap."""
