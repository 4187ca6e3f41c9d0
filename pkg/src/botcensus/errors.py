"""Exception hierarchy for botcensus.

Every error raised by the library derives from BotCensusError so callers can
catch one base class. The CLI maps subsets of these onto exit codes.
"""


class BotCensusError(Exception):
    """Base class for all botcensus errors."""


class ParseError(BotCensusError):
    """A record or file could not be parsed."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class MissingField(ParseError):
    """A required field is absent from a record."""


class InvariantViolation(BotCensusError):
    """Data violates a structural invariant (negative count, bad timestamp order, ...)."""


class EmptyInput(BotCensusError):
    """An operation that needs at least one element received none."""


class BadFraction(BotCensusError):
    """A fraction parameter is outside its valid range."""


class InsufficientData(BotCensusError):
    """Not enough samples to perform the operation."""


class SingleClassError(BotCensusError):
    """Training labels contain only one class."""


class DimensionError(BotCensusError):
    """Array/vector dimensions do not match the expected shape."""


class BadTemperature(BotCensusError):
    """Temperature must be a finite positive real."""


class EmptyValidation(BotCensusError):
    """Validation set is empty or below the minimum size."""


class BadLambda(BotCensusError):
    """Distillation mixing weight must lie in [0, 1]."""


class KeyMismatch(BotCensusError):
    """Probability map keys and weight keys differ."""


class EmptyCommunity(BotCensusError):
    """Community estimate requested for zero users."""


class UnknownUser(BotCensusError):
    """An edge endpoint does not exist in the user store."""

    def __init__(self, user_id: str):
        self.user_id = user_id
        super().__init__(f"unknown user id: {user_id!r}")


class ConfigError(BotCensusError):
    """Invalid configuration value or file."""


class InfeasibleTarget(BotCensusError):
    """A resampling target cannot be met by the available pool."""


class UnknownProvider(BotCensusError):
    """A bundle references an embedding provider that is not registered."""


class BundleError(BotCensusError):
    """A model bundle is malformed or fails invariant validation."""


class BundleVersionError(BundleError):
    """Bundle version tag does not match the supported version."""


class IoError(BotCensusError):
    """A report or bundle path could not be written."""
