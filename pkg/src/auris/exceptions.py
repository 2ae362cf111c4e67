"""Exception hierarchy shared by every subpackage."""


class AurisError(Exception):
    """Base class for all errors raised by auris."""


class IngestionError(AurisError, OSError):
    """An audio or feature file could not be read."""


class InputError(AurisError, ValueError):
    """An argument violates an operation's precondition."""


class RangeError(InputError):
    """A time or index bound falls outside the valid range."""


class ConfigurationError(AurisError, ValueError):
    """Inconsistent or invalid configuration."""


class ShapeError(AurisError, ValueError):
    """Array shapes are incompatible."""


class UsageError(AurisError, RuntimeError):
    """An object was used in a mode it does not support."""


class NumericalError(AurisError, FloatingPointError):
    """A loss or gradient became non-finite."""


class UndefinedMetricError(AurisError, ZeroDivisionError):
    """A metric's denominator is zero."""
