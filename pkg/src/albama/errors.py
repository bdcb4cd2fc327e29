"""Exception hierarchy.

Data problems (bad input files, too-short series) derive from ``DataError``;
numerical failures (zero variance, solver breakdown) from ``NumericalError``.
The CLI maps the two families to distinct exit codes.
"""


class AlbamaError(Exception):
    """Base class for all package errors."""


class DataError(AlbamaError, ValueError):
    """Input data violates a precondition."""


class MissingColumnError(DataError):
    pass


class DateParseError(DataError):
    pass


class DuplicateDateError(DataError):
    pass


class GapError(DataError):
    """Consecutive observations are not consecutive months."""


class NonFiniteError(DataError):
    pass


class SeriesTooShortError(DataError):
    pass


class NonPositiveValueError(DataError):
    pass


class EmptyWindowError(DataError):
    pass


class NumericalError(AlbamaError, ArithmeticError):
    """A computation has no well-defined result."""


class ZeroVarianceError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass
