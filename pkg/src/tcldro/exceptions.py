"""Exception types shared across the package.

The CLI maps each class onto a process exit code, see :mod:`tcldro.cli`.
"""


class TclDroError(Exception):
    """Base class for all package errors."""


class ConfigError(TclDroError, ValueError):
    """Invalid configuration or parameter outside its documented domain."""


class DataError(TclDroError, ValueError):
    """Input data is malformed, inconsistent, or insufficient."""


class DomainError(DataError):
    """A numerical routine was called outside its mathematical domain."""


class NumericalError(TclDroError, ArithmeticError):
    """An algorithm failed to converge or produced a non-finite result."""
