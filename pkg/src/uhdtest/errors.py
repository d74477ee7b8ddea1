"""Exception hierarchy shared across the package."""


class UHDTestError(Exception):
    """Base class for all package errors."""


class DimensionError(UHDTestError, ValueError):
    pass


class SizeError(UHDTestError, ValueError):
    pass


class NumericalError(UHDTestError, ArithmeticError):
    pass


class EmptySpectrumError(UHDTestError, ValueError):
    pass


class DegenerateSpectrumError(UHDTestError, ValueError):
    pass


class InvalidBandwidthError(UHDTestError, ValueError):
    pass


class QuadratureError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class NoUsableSplitsError(UHDTestError, RuntimeError):
    pass


class GridTooSmallError(UHDTestError, ValueError):
    pass


class PSDError(UHDTestError, ValueError):
    pass


class ConfigError(UHDTestError, ValueError):
    """Invalid combination of test parameters."""


class DataFormatError(UHDTestError, ValueError):
    """Input file could not be parsed as a numeric matrix or report."""
