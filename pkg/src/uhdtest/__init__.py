"""Repeated-split two-sample test for covariance matrices when p far exceeds n."""

from importlib.metadata import PackageNotFoundError, version as _version

from .errors import UHDTestError
from .procedure import DecisionSummary, TestConfig, dr_threshold, run_test
from .spectra import DataMatrix, Spectrum, sample_covariance_spectrum, spectrum_summary
from .teststat import variance_constant
from .tuning import calibrate_delta, select_theta

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = [
    "UHDTestError",
    "TestConfig",
    "DecisionSummary",
    "run_test",
    "dr_threshold",
    "DataMatrix",
    "Spectrum",
    "sample_covariance_spectrum",
    "spectrum_summary",
    "variance_constant",
    "calibrate_delta",
    "select_theta",
    "__version__",
]
