"""Exception types shared across the package.

The CLI maps :class:`DataError` to exit code 2 and :class:`NumericalError`
to exit code 3.
"""


class LoadIdError(Exception):
    """Base class for all package errors."""


class DataError(LoadIdError, ValueError):
    """Bad or inconsistent input data (missing files, parse failures, shapes)."""


class IngestionError(DataError):
    """A file referenced by a manifest could not be read."""


class ParseError(DataError):
    """A trace or manifest row could not be parsed as finite numbers."""


class NumericalError(LoadIdError, ArithmeticError):
    """A numerical routine hit a degenerate configuration."""
