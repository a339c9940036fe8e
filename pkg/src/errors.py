"""
Errors - Exception hierarchy shared by the library and the CLI.

Every error carries the exit code the CLI returns for it:
- ConfigError  -> 2
- DataError    -> 3
- NumericError -> 4
"""

from typing import Iterable, Optional


class P2GError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1
    category = 'error'


class ConfigError(P2GError):
    exit_code = 2
    category = 'config'


class DataError(P2GError):
    exit_code = 3
    category = 'data'


class NumericError(P2GError):
    exit_code = 4
    category = 'numeric'


# Configuration errors

class InvalidConfig(ConfigError):
    pass


class ConfigMismatch(ConfigError):
    """Raised when a stored configuration disagrees with the requested one."""

    def __init__(self, fields: Iterable[str], detail: Optional[str] = None):
        self.fields = sorted(fields)
        message = f"configuration mismatch in fields: {', '.join(self.fields)}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class InvalidBeta(ConfigError):
    pass


class OddDim(ConfigError):
    pass


class AllPartsDisabled(ConfigError):
    pass


class UnsupportedGNN(ConfigError):
    pass


# Data errors

class SchemaError(DataError):
    """Schema violation in an on-disk document, with the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class DegenerateBox(DataError):
    pass


class EmptySet(DataError):
    pass


class MissingLabels(DataError):
    pass


class CorruptCheckpoint(DataError):
    pass


class EmptyDataset(DataError):
    pass


class EmptyFeatureMap(DataError):
    pass


class LengthMismatch(DataError):
    pass


# Numeric errors

class NonFiniteValue(NumericError):
    pass


class ShapeMismatch(NumericError):
    pass


class InvalidTarget(NumericError):
    pass


class GradientMismatch(NumericError):
    pass
