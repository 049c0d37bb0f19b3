"""Exception and warning types raised by grassrmc."""


class RMCError(Exception):
    """Base class for all grassrmc errors."""


class DimensionMismatch(RMCError, ValueError):
    pass


class IndexOutOfRange(RMCError, IndexError):
    pass


class DuplicateEntry(RMCError, ValueError):
    pass


class NonFiniteValue(RMCError, ValueError):
    pass


class NotOrthonormal(RMCError, ValueError):
    pass


class RankDeficient(RMCError, ArithmeticError):
    pass


class SingularBlock(RMCError, ArithmeticError):
    pass


class StaleState(RMCError):
    """An iterate's cached residual no longer matches its (U, V, S)."""


class InvalidSpec(RMCError, ValueError):
    pass


class ZeroDenominator(RMCError, ZeroDivisionError):
    pass


class ParseError(RMCError, ValueError):
    """Malformed input file. ``location`` is a line number or byte offset."""

    def __init__(self, message, location=None):
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)
        self.location = location


class TruncatedFile(ParseError):
    pass


class FormatError(ParseError):
    pass


class InconsistentDimensions(RMCError, ValueError):
    pass


class ConvergenceWarning(UserWarning):
    """Iterative routine stopped at its cap without meeting its tolerance."""
