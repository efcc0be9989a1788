"""Exception hierarchy.

Every error raised by the library derives from :class:`GeoflowError`; the CLI maps
the three families below onto its exit codes.
"""


class GeoflowError(Exception):
    exit_code = 2


class UsageError(GeoflowError):
    exit_code = 1


class DataError(GeoflowError):
    exit_code = 2


class NumericError(GeoflowError):
    exit_code = 3


class ConfigError(UsageError):
    pass


class DomainError(UsageError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionError(DataError, ValueError):
    pass


class ShapeError(DataError, ValueError):
    pass


class DuplicateIdError(DataError):
    pass


class LengthMismatchError(DataError, ValueError):
    pass


class EmptyRegionError(DataError):
    pass


class ZeroVectorError(NumericError, ValueError):
    pass


class AntipodalError(NumericError, ValueError):
    pass


class NonFiniteError(NumericError, FloatingPointError):
    pass


class DegenerateError(NumericError):
    pass
