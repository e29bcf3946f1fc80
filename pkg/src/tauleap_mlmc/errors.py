"""Exception types raised across the package."""


class TauLeapError(Exception):
    """Base class for all package errors."""


class UnsupportedScaling(TauLeapError):
    """Raised when the derived time-scale exponent gamma is positive."""


class InvalidMean(TauLeapError, ValueError):
    pass


class InvalidRate(TauLeapError, ValueError):
    pass


class InvalidGrid(TauLeapError, ValueError):
    """Raised when t_end is not an integer multiple of the step size."""


class EventBudgetExceeded(TauLeapError, RuntimeError):
    pass


class ScheduleOverflow(TauLeapError):
    pass


class DegeneratePilot(TauLeapError):
    pass


class SingularDesign(TauLeapError):
    pass


class AllocationShortfall(UserWarning):
    """Soft flag: the achieved estimator variance exceeds eps**2."""


class ParseError(TauLeapError):
    def __init__(self, message, line=None, column=None):
        self.message = message
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class UnknownSpecies(ParseError):
    pass


class DuplicateSpecies(ParseError):
    pass


class NonPositiveRate(ParseError):
    pass
