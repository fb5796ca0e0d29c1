"""Exception hierarchy shared by every sitswin subpackage."""

from __future__ import annotations

from typing import Optional


class SitsError(Exception):
    """Base class for all sitswin errors."""


class DimensionError(SitsError, ValueError):
    """Shapes or extents that do not fit together."""


class ConfigError(SitsError, ValueError):
    """Invalid configuration value. `key` and `line` locate the offending entry."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None) -> None:
        super().__init__(message)
        self.key = key
        self.line = line


class ParameterError(SitsError, ValueError):
    """Invalid scalar argument."""


class FormatError(SitsError, ValueError):
    """Malformed file content."""


class DegenerateError(SitsError, ValueError):
    """A statistic is undefined for the given input."""


class UndefinedKappaError(DegenerateError):
    """Chance agreement is 1, so kappa has a zero denominator."""


class RangeError(SitsError, IndexError):
    """Class id outside [0, K)."""


class PaletteError(SitsError, KeyError):
    """Label id without a colour."""


class UnsupportedError(SitsError, NotImplementedError):
    """Kernel configuration outside what the kernels implement."""


class GraphError(SitsError, RuntimeError):
    """Misuse of the autodiff tape."""


class NumericalError(SitsError, ArithmeticError):
    """NaN or Inf produced by a forward op."""
