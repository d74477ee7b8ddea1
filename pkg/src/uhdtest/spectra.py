"""
Scaled sample-covariance spectra for p >> n data blocks.

Eigenvalues are those of (pn)^(-1/2) * sum_i (x_i - xbar)(x_i - xbar)^T, obtained
from the n x n centered Gram matrix so the p x p covariance is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DimensionError, EmptySpectrumError, NumericalError

__all__ = [
    "DataMatrix",
    "Spectrum",
    "SpectrumSummary",
    "as_data_matrix",
    "sample_covariance_spectrum",
    "batch_spectra",
    "spectrum_summary",
]

_PSD_RTOL = 1e-10


@dataclass(frozen=True)
class DataMatrix:
    """An n x p sample block; rows are observations."""

    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionError("data must be a two-dimensional array")
        n, p = values.shape
        if n < 2 or p < 1:
            raise DimensionError(f"data must have n >= 2 rows and p >= 1 columns, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DimensionError("data contains NaN or infinite entries")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def p(self) -> int:
        return int(self.values.shape[1])


def as_data_matrix(data: DataMatrix | ArrayLike) -> DataMatrix:
    if isinstance(data, DataMatrix):
        return data
    return DataMatrix(np.asarray(data, dtype=np.float64))


@dataclass(frozen=True)
class Spectrum:
    """Descending retained eigenvalues (length n - 1) of a scaled covariance."""

    eigenvalues: NDArray[np.float64]
    n: int
    p: int

    def __len__(self) -> int:
        return int(self.eigenvalues.shape[0])

    @property
    def largest(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def smallest(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def range(self) -> float:
        return float(self.eigenvalues[0] - self.eigenvalues[-1])


@dataclass(frozen=True)
class SpectrumSummary:
    median: float
    std: float
    range: float
    max: float
    min: float

    def to_dict(self) -> dict[str, float]:
        return {"median": self.median, "std": self.std, "range": self.range,
                "max": self.max, "min": self.min}


def _clamp_psd(eigs: NDArray[np.float64]) -> NDArray[np.float64]:
    # eigs: (..., m) descending
    tol = _PSD_RTOL * np.maximum(1.0, eigs[..., :1])
    if np.any(eigs < -tol):
        raise NumericalError("scaled covariance has a materially negative eigenvalue")
    return np.where(eigs < 0.0, 0.0, eigs)


def batch_spectra(blocks: NDArray[np.float64]) -> NDArray[np.float64]:
    """Retained spectra for a stack of blocks shaped (k, n, p); returns (k, n - 1)."""
    blocks = np.asarray(blocks, dtype=np.float64)
    if blocks.ndim != 3:
        raise DimensionError("blocks must be shaped (k, n, p)")
    _, n, p = blocks.shape
    if n < 3:
        raise DimensionError(f"need n >= 3 rows for a spectrum, got n={n}")
    centered = blocks - blocks.mean(axis=1, keepdims=True)
    gram = centered @ centered.transpose(0, 2, 1)
    gram *= 1.0 / np.sqrt(float(p) * float(n))
    try:
        eigs = np.linalg.eigvalsh(gram)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver failed: {exc}") from exc
    # ascending -> descending, then drop the centering zero (now last)
    eigs = eigs[:, ::-1]
    return np.ascontiguousarray(_clamp_psd(eigs)[:, :-1])


def sample_covariance_spectrum(data: DataMatrix | ArrayLike) -> Spectrum:
    """Return the n - 1 largest eigenvalues of the (pn)^(-1/2)-scaled covariance.

    The eigenvalue removed is the one forced to zero by mean-centering.
    """
    dm = as_data_matrix(data)
    if dm.n < 3:
        raise DimensionError(f"need n >= 3 rows for a spectrum, got n={dm.n}")
    eigs = batch_spectra(dm.values[None, :, :])[0]
    return Spectrum(eigenvalues=eigs, n=dm.n, p=dm.p)


def full_gram_spectrum(data: DataMatrix | ArrayLike) -> NDArray[np.float64]:
    """All n eigenvalues (descending) of the scaled centered Gram matrix, zero included."""
    dm = as_data_matrix(data)
    centered = dm.values - dm.values.mean(axis=0)
    gram = centered @ centered.T / np.sqrt(float(dm.p) * float(dm.n))
    return np.linalg.eigvalsh(gram)[::-1]


def spectrum_summary(s: Spectrum | ArrayLike) -> SpectrumSummary:
    eigs = np.asarray(s.eigenvalues if isinstance(s, Spectrum) else s, dtype=np.float64)
    if eigs.size == 0:
        raise EmptySpectrumError("spectrum is empty")
    hi = float(eigs.max())
    lo = float(eigs.min())
    return SpectrumSummary(
        median=float(np.median(eigs)),
        std=float(eigs.std()),
        range=hi - lo,
        max=hi,
        min=lo,
    )
