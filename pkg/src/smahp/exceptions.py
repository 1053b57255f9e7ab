"""Exception hierarchy.

Three families map onto the CLI exit codes: usage problems (1), data
problems (2), numerical problems (3).
"""


class SmahpError(Exception):
    """Base class for all package errors."""


class UsageError(SmahpError):
    """Bad invocation: unknown flags, malformed config keys, conflicting options."""

    exit_code = 1


class DataError(SmahpError):
    """Input data violates a structural contract."""

    exit_code = 2


class NumericalError(SmahpError):
    """A numerical routine could not produce a usable result."""

    exit_code = 3


# -- data errors --------------------------------------------------------------

class ShapeMismatch(DataError):
    pass


class NonFinite(DataError):
    pass


class AllCensored(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class MissingColumn(DataError):
    pass


class NonPositiveTime(DataError):
    pass


class BadStatusValue(DataError):
    pass


class DuplicateId(DataError):
    pass


class JoinMismatch(DataError):
    pass


class InvalidScenario(DataError):
    pass


class OutOfRange(DataError):
    pass


class InvalidTau(DataError):
    pass


class NonPositiveSE(DataError):
    pass


class TooManyPairs(DataError):
    pass


# -- numerical errors ----------------------------------------------------------

class AllCensoredFold(NumericalError):
    """A cross-validation training split contains no observed events."""


class RankDeficientDesign(NumericalError):
    """Design matrix is rank deficient; carries the offending column names."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class SingularInformation(NumericalError):
    """Observed information matrix is not invertible at the optimum."""


class CalibrationFailure(NumericalError):
    """Censoring-rate calibration could not bracket the target."""


class EmptyScores(NumericalError):
    """No (gene, mediator) pairs available for screening."""
