"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class SigmaVolError(Exception):
    """Base class for all package errors."""


class ConfigError(SigmaVolError, ValueError):
    pass


class DataError(SigmaVolError, ValueError):
    pass


class ShapeError(SigmaVolError, ValueError):
    pass


class NumericalError(SigmaVolError, ArithmeticError):
    pass


class NonFiniteError(NumericalError, OverflowError):
    """A computation produced NaN or Inf."""


class DataWarning(UserWarning):
    pass
