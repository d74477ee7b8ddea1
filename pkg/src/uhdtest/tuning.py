"""Data-driven choice of the bandwidth multiplier theta and of the DR threshold delta."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigError, DegenerateSpectrumError, GridTooSmallError
from .spectra import DataMatrix, SpectrumSummary, as_data_matrix
from .splitkit import check_split_size

__all__ = [
    "ThetaGrid",
    "ThetaSearch",
    "CalibrationResult",
    "default_theta_grid",
    "bandwidth_from_theta",
    "moving_average",
    "prefix_variances",
    "pick_index",
    "select_theta",
    "theta_search",
    "select_theta_from_spectra",
    "calibrate_delta",
    "upper_quantile",
]


@dataclass(frozen=True)
class ThetaGrid:
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 6:
            raise GridTooSmallError(f"theta grid needs at least 6 values, got {len(vals)}")
        if any(v <= 0 or not math.isfinite(v) for v in vals):
            raise ConfigError("theta grid values must be positive and finite")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("theta grid must be strictly increasing")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)


def default_theta_grid() -> ThetaGrid:
    return ThetaGrid(tuple(np.round(np.linspace(0.15, 1.80, 12), 10)))


def bandwidth_from_theta(theta: float, z_summary: SpectrumSummary | float) -> float:
    std = z_summary.std if isinstance(z_summary, SpectrumSummary) else float(z_summary)
    if theta <= 0:
        raise ConfigError(f"theta must be positive, got {theta}")
    if not std > 0:
        raise DegenerateSpectrumError("reference spectrum has zero standard deviation")
    return theta * std


def moving_average(dr: ArrayLike, window: int = 3) -> NDArray[np.float64]:
    dr = np.asarray(dr, dtype=np.float64)
    return np.convolve(dr, np.ones(window) / window, mode="valid")


def prefix_variances(series: ArrayLike, count: int) -> NDArray[np.float64]:
    """v_t = population variance of series[0 : t + 1] for t = 1..count."""
    # shifting by the first value keeps constant prefixes at exactly zero variance
    series = np.asarray(series, dtype=np.float64)
    series = series - series[0]
    return np.array([series[: t + 1].var() for t in range(1, count + 1)])


def pick_index(series: ArrayLike, s: int) -> tuple[int, bool]:
    """Select a 1-based grid index l in [3, s - 2].

    ``series`` is the sequence the stability rule is applied to (the smoothed
    decision ratios by default). Returns (l, used_fallback); when no index
    passes both conditions the first maximiser of ``series`` over the
    candidate range is returned.
    """
    series = np.asarray(series, dtype=np.float64)
    if s < 6:
        raise GridTooSmallError(f"theta grid needs at least 6 values, got {s}")
    v = prefix_variances(series, s - 3)  # v[t - 1] = v_t
    floor = series.max() / 5.0
    for ell in range(3, s - 1):
        if series[ell - 1] > floor and v[ell - 3] > v[ell - 2]:
            return ell, False
    candidates = series[2: s - 2]
    return 3 + int(np.argmax(candidates)), True


@dataclass(frozen=True)
class ThetaSearch:
    grid: ThetaGrid
    dr: tuple[float, ...]
    dr_smooth: tuple[float, ...]
    index: int  # 1-based
    fallback: bool

    @property
    def theta(self) -> float:
        return self.grid.values[self.index - 1]


def select_theta_from_spectra(spectra, config, grid: ThetaGrid | None = None, classification=None,
                              smoothed: bool = True) -> float:
    return theta_search(spectra, config, grid, classification, smoothed).theta


def theta_search(spectra, config, grid: ThetaGrid | None = None, classification=None,
                 smoothed: bool = True) -> ThetaSearch:
    """Decision ratio along the grid on one fixed set of splits, then the stability rule."""
    from .procedure import evaluate_splits
    from .splitkit import classify_batch
    from .teststat import variance_constant

    grid = grid or default_theta_grid()
    if classification is None:
        classification = classify_batch(spectra.x, spectra.y, spectra.z, config.eps, config.eps1)
    v = variance_constant()
    dr = [evaluate_splits(spectra, c, config.alpha, config.eps, config.eps1, v, classification).decision_ratio()
          for c in grid.values]
    dr_smooth = moving_average(dr)
    series = dr_smooth if smoothed else np.asarray(dr)
    index, fallback = pick_index(series, len(grid))
    return ThetaSearch(grid=grid, dr=tuple(dr), dr_smooth=tuple(float(x) for x in dr_smooth),
                       index=index, fallback=fallback)


def select_theta(X: DataMatrix | np.ndarray, Y: DataMatrix | np.ndarray, config,
                 grid: ThetaGrid | None = None, smoothed: bool = True) -> float:
    """Pick theta from the grid; the same splits are reused for every grid value."""
    from .procedure import usable_split_spectra

    X = as_data_matrix(X)
    Y = as_data_matrix(Y)
    n = config.resolved_n(X.n, Y.n)
    spectra, classification = usable_split_spectra(X, Y, n, config)
    return select_theta_from_spectra(spectra, config, grid, classification, smoothed)


@dataclass(frozen=True)
class CalibrationResult:
    delta: float
    dr_samples: tuple[float, ...]
    b: int
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"delta": self.delta, "b": self.b, "params": dict(self.params),
                "dr_samples": list(self.dr_samples)}

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        return cls(delta=float(d["delta"]), dr_samples=tuple(float(x) for x in d["dr_samples"]),
                   b=int(d["b"]), params=dict(d.get("params", {})))


def upper_quantile(samples: ArrayLike, alpha: float) -> float:
    """Smallest order statistic d with #{x <= d} / B >= 1 - alpha."""
    xs = np.sort(np.asarray(samples, dtype=np.float64))
    b = xs.size
    # round before ceil so (1 - 0.05) * 1000 lands on 950, not 951
    rank = max(1, math.ceil(round((1.0 - alpha) * b, 9)))
    return float(xs[rank - 1])


def _calibration_seed(seed: int, i: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), 0xCA11B, int(i)])


def calibrate_delta(n1: int, n2: int, n: int, p: int, k_splits: int, alpha: float, b: int,
                    theta: float, seed: int, threads: int = 1, eps: float = 0.05,
                    eps1: float = 0.05) -> CalibrationResult:
    """Null DR distribution from B standard-Gaussian data sets; delta is its (1 - alpha) quantile."""
    from .procedure import TestConfig, run_test

    if b < 1:
        raise ConfigError(f"b must be >= 1, got {b}")
    if p < 1:
        raise ConfigError(f"p must be >= 1, got {p}")
    check_split_size(n, n1, n2)
    base = TestConfig(n=n, k_splits=k_splits, alpha=alpha, eps=eps, eps1=eps1, theta=float(theta),
                      delta="binomial", threads=1)

    def replicate(i: int) -> float:
        ss = _calibration_seed(seed, i)
        data_seq, split_seq = ss.spawn(2)
        rng = np.random.default_rng(data_seq)
        X = rng.standard_normal((n1, p))
        Y = rng.standard_normal((n2, p))
        split_seed = int(split_seq.generate_state(1, dtype=np.uint64)[0])
        cfg = replace(base, seed=split_seed)
        return run_test(X, Y, cfg).dr

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            drs = list(pool.map(replicate, range(b)))
    else:
        drs = [replicate(i) for i in range(b)]
    params = {"n1": n1, "n2": n2, "n": n, "p": p, "k_splits": k_splits, "alpha": alpha,
              "theta": float(theta), "seed": int(seed), "eps": eps, "eps1": eps1}
    return CalibrationResult(delta=upper_quantile(drs, alpha), dr_samples=tuple(drs), b=b, params=params)
