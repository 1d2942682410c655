"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError (and its
format subclasses) -> 3, NumericalAbort -> 4.
"""


class LexiSafeError(Exception):
    """Base class for all package errors."""


class ConfigError(LexiSafeError):
    """Invalid configuration: bad dimensions, unknown keys, out-of-range values."""


class DataError(LexiSafeError):
    """Problems with datasets or serialized artifacts."""


class BadMagicError(DataError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(DataError):
    """Container version is not supported."""


class TruncatedDataError(DataError):
    """File ends before all declared columns are present."""


class HeaderMismatchError(DataError):
    """Header-declared sizes disagree with the bytes actually on disk."""


class ChecksumMismatchError(DataError):
    """Trailing checksum does not match the file contents."""


class NumericalAbort(LexiSafeError):
    """Training produced a non-finite quantity; carries diagnostics."""

    def __init__(self, message, step=None, detail=None):
        super().__init__(message)
        self.step = step
        self.detail = detail
