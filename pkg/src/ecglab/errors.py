class EcgLabError(Exception):
    """Base class for all errors raised by ecglab."""


class FormatError(EcgLabError):
    """A file does not follow the expected layout."""


class IntegrityError(EcgLabError):
    """A file parses but its contents disagree with its own header."""


class ConfigError(EcgLabError):
    """Threshold table or run configuration is invalid."""


class DataError(EcgLabError):
    """An input value is outside the accepted domain."""


class ShapeError(EcgLabError, ValueError):
    """Array dimensions do not match what the operation expects."""


class UndefinedMetricError(EcgLabError):
    """A metric needs both classes present but only one was given."""
