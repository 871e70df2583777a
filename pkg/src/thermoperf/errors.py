"""Exception types raised across the package."""


class ThermoperfError(Exception):
    """Base class for package errors."""


class DomainError(ThermoperfError, ValueError):
    """An argument lies outside the domain of the operation."""


class SeriesConvergenceError(ThermoperfError, ArithmeticError):
    """An infinite series did not reach its cutoff within the term budget."""

    def __init__(self, message, partial_sum, n_terms):
        super().__init__(message)
        self.partial_sum = partial_sum
        self.n_terms = n_terms


class QuadratureError(ThermoperfError, ArithmeticError):
    def __init__(self, message, achieved_tol):
        super().__init__(message)
        self.achieved_tol = achieved_tol


class EmptyTraceError(ThermoperfError, ValueError):
    pass


class DegenerateNormalizationError(ThermoperfError, ValueError):
    pass


class DimensionError(ThermoperfError, ValueError):
    pass


class RangeError(ThermoperfError, ValueError):
    pass


class DatabaseParseError(ThermoperfError, ValueError):
    def __init__(self, message, line=None, column=None):
        loc = f" (line {line}" + (f", column {column})" if column else ")") if line else ""
        super().__init__(message + loc)
        self.line = line
        self.column = column


class DatabaseValidationError(ThermoperfError, ValueError):
    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class StratificationError(ThermoperfError, ValueError):
    """A cross-validation fold ended up with a single class."""


class FitConvergenceError(ThermoperfError, RuntimeError):
    """No optimizer start converged; ``best`` holds the best-so-far result."""

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best
