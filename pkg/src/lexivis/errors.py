"""Exception hierarchy shared across the package."""


class LexivisError(Exception):
    """Base class for all package errors."""


class SnapshotError(LexivisError):
    """A knowledge snapshot file is malformed or internally inconsistent."""


class DataError(LexivisError):
    """An input data file (dataset, regions, lexicon, ...) is invalid or missing."""


class ConfigError(LexivisError):
    """A configuration value or combination of values is invalid."""


class NumericsError(LexivisError):
    """A loss or gradient became non-finite; carries a diagnostic payload."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
