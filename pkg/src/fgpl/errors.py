"""Exception hierarchy shared across the package.

Each class carries the process exit code the CLI maps it to.
"""


class FgplError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(FgplError):
    """A value or configuration violates a documented precondition."""

    exit_code = 2


class ConfigurationError(ValidationError):
    """A run configuration is internally inconsistent (e.g. missing lattice)."""


class ParseError(FgplError):
    """A file could not be parsed; the message names the offending line."""

    exit_code = 3


class NumericError(FgplError):
    """A numeric computation received or produced non-finite values."""

    exit_code = 4
