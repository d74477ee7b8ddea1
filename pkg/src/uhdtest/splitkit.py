"""Random data splitting and efficiency classification of splits."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionError, EmptySpectrumError, SizeError
from .spectra import DataMatrix, Spectrum, as_data_matrix

__all__ = [
    "SplitTag",
    "SplitTriple",
    "SplitClass",
    "max_split_size",
    "default_split_size",
    "split_rng",
    "split_once",
    "classify_split",
    "classify_batch",
]


class SplitTag(enum.IntEnum):
    DISCARDED = 0
    EFFICIENT = 1
    AUTO_REJECT = 2


@dataclass(frozen=True)
class SplitTriple:
    x_indices: NDArray[np.intp]
    y_indices: NDArray[np.intp]
    z_indices: NDArray[np.intp]
    z_source: str  # "x" or "y": the parent the reference block came from
    n: int


@dataclass(frozen=True)
class SplitClass:
    tag: SplitTag
    gamma: float


def max_split_size(n1: int, n2: int) -> float:
    """The bound N = min{max(n1, n2)/2, n1, n2}; a split size must be strictly below it."""
    return min(max(n1, n2) / 2.0, float(n1), float(n2))


def default_split_size(n1: int, n2: int) -> int:
    """N - 5, clipped into the admissible range [3, N)."""
    bound = max_split_size(n1, n2)
    largest = int(np.ceil(bound)) - 1
    n = int(np.floor(bound)) - 5
    n = min(n, largest)
    if n < 3:
        if largest >= 3:
            return 3
        raise SizeError(f"samples too small to split: n1={n1}, n2={n2} (need N > 3)")
    return n


def check_split_size(n: int, n1: int, n2: int) -> None:
    bound = max_split_size(n1, n2)
    if n < 3:
        raise SizeError(f"split size n must be >= 3, got {n}")
    if not n < bound:
        raise SizeError(f"split size n={n} must be strictly below N={bound:g} for n1={n1}, n2={n2}")


def split_rng(seed: int, index: int, round_: int = 0) -> np.random.Generator:
    """Generator for one split, keyed by (master seed, resample round, split index)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(round_), int(index)]))


def split_once(X: DataMatrix | np.ndarray, Y: DataMatrix | np.ndarray, n: int,
               rng: np.random.Generator) -> SplitTriple:
    X = as_data_matrix(X)
    Y = as_data_matrix(Y)
    if X.p != Y.p:
        raise DimensionError(f"feature counts differ: {X.p} vs {Y.p}")
    return _draw_indices(X.n, Y.n, n, rng)


def _draw_indices(n1: int, n2: int, n: int, rng: np.random.Generator) -> SplitTriple:
    check_split_size(n, n1, n2)
    # ties go to X
    if n1 >= n2:
        perm = rng.permutation(n1)
        x_idx, z_idx = perm[:n], perm[n:2 * n]
        y_idx = rng.permutation(n2)[:n]
        source = "x"
    else:
        x_idx = rng.permutation(n1)[:n]
        perm = rng.permutation(n2)
        y_idx, z_idx = perm[:n], perm[n:2 * n]
        source = "y"
    return SplitTriple(x_indices=x_idx, y_indices=y_idx, z_indices=z_idx, z_source=source, n=n)


def classify_batch(ex: NDArray[np.float64], ey: NDArray[np.float64], ez: NDArray[np.float64],
                   eps: float = 0.05, eps1: float = 0.05) -> tuple[NDArray[np.int8], NDArray[np.float64]]:
    """Vectorised classification of k splits from descending spectra shaped (k, m).

    Returns (tags, gammas) where tags hold SplitTag codes.
    """
    ex = np.atleast_2d(ex)
    ey = np.atleast_2d(ey)
    ez = np.atleast_2d(ez)
    if ex.shape[1] == 0 or ey.shape[1] == 0 or ez.shape[1] == 0:
        raise EmptySpectrumError("cannot classify a split with an empty spectrum")
    gamma = np.median(ez, axis=1)
    lx1, lxn = ex[:, 0], ex[:, -1]
    my1, myn = ey[:, 0], ey[:, -1]
    rx = lx1 - lxn
    ry = my1 - myn

    auto = np.maximum(np.abs(lx1 - myn), np.abs(my1 - lxn)) > rx + ry + eps1
    inside_y = np.maximum(np.abs(gamma - my1), np.abs(gamma - myn)) <= ry - eps
    inside_x = np.maximum(np.abs(gamma - lx1), np.abs(gamma - lxn)) <= rx - eps
    tags = np.full(gamma.shape, SplitTag.DISCARDED, dtype=np.int8)
    tags[inside_x & inside_y] = SplitTag.EFFICIENT
    tags[auto] = SplitTag.AUTO_REJECT
    return tags, gamma


def classify_split(spec_x: Spectrum | np.ndarray, spec_y: Spectrum | np.ndarray,
                   spec_z: Spectrum | np.ndarray, eps: float = 0.05, eps1: float = 0.05) -> SplitClass:
    """Classify one split as auto-reject, efficient or discarded.

    Auto-reject (the two test-bed spectra are too far apart to overlap) is
    checked first; otherwise the split is efficient when the reference median
    sits inside both spectra with margin ``eps``.
    """
    arrs = [np.asarray(s.eigenvalues if isinstance(s, Spectrum) else s, dtype=np.float64)
            for s in (spec_x, spec_y, spec_z)]
    if any(a.size == 0 for a in arrs):
        raise EmptySpectrumError("cannot classify a split with an empty spectrum")
    arrs = [np.sort(a)[::-1] for a in arrs]
    tags, gamma = classify_batch(arrs[0][None, :], arrs[1][None, :], arrs[2][None, :], eps, eps1)
    return SplitClass(tag=SplitTag(int(tags[0])), gamma=float(gamma[0]))
