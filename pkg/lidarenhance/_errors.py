"""Exception hierarchy shared by every lidarenhance module."""

from __future__ import annotations


class LidarEnhanceError(Exception):
    """Base class for all errors raised by lidarenhance."""


class UsageError(LidarEnhanceError):
    """Bad arguments or option values supplied by the caller."""


class DataError(LidarEnhanceError, ValueError):
    """Malformed or mutually inconsistent data."""


class DimensionMismatchError(DataError):
    pass


class OutOfBoundsError(DataError):
    pass


class UnknownPresetError(DataError, KeyError):
    def __str__(self) -> str:
        # KeyError would otherwise repr() the message.
        return str(self.args[0]) if self.args else ""


class NonUnitDirectionError(DataError):
    pass


class TrainingDivergedError(DataError):
    """Raised when a training step produces a non-finite loss."""

    def __init__(self, message: str, step: int) -> None:
        super().__init__(message)
        self.step = step


class ConfigError(DataError):
    """Configuration text that cannot be parsed or violates a schema."""

    def __init__(self, message: str, lineno: int = 0) -> None:
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)


class FormatError(DataError):
    """Binary file that does not follow its declared layout."""


class TruncatedFileError(FormatError):
    pass


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class UnsupportedDtypeError(FormatError):
    pass


class DimensionOverflowError(FormatError):
    pass
