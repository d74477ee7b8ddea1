"""
The repeated-split two-sample test: K random splits, classification, windowed
statistics, per-split votes, the decision ratio and the final verdict.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .errors import ConfigError, DegenerateSpectrumError, DimensionError, NoUsableSplitsError
from .spectra import DataMatrix, as_data_matrix, batch_spectra
from .splitkit import (
    SplitClass,
    SplitTag,
    _draw_indices,
    check_split_size,
    classify_batch,
    default_split_size,
    split_rng,
)
from .teststat import SplitRecord, VarianceConstant, critical_value, local_statistic_batch, variance_constant

__all__ = [
    "TestConfig",
    "SplitSpectra",
    "SplitOutcome",
    "DecisionSummary",
    "compute_split_spectra",
    "evaluate_splits",
    "run_test",
    "dr_threshold",
    "default_threads",
]

DeltaSpec = Union[float, str]
ThetaSpec = Union[float, str]
DELTA_MODES = ("auto", "binomial", "gaussian")
_CHUNK = 32  # splits per batched eigensolve; fixed so results never depend on worker count


def default_threads() -> int:
    raw = os.environ.get("UHDTEST_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class TestConfig:
    """Parameters of one test run.

    ``n=None`` resolves to N - 5. ``theta="auto"`` runs the bandwidth search and
    ``delta`` is an explicit threshold or one of ``"auto"`` (Gaussian
    calibration), ``"binomial"`` or ``"gaussian"`` (asymptotic formulas).
    """

    __test__ = False  # not a pytest class

    n: int | None = None
    k_splits: int = 1000
    alpha: float = 0.05
    eps: float = 0.05
    eps1: float = 0.05
    theta: ThetaSpec = "auto"
    delta: DeltaSpec = "binomial"
    seed: int = 0
    max_resample_rounds: int = 10
    calibration_b: int = 1000
    calibrated_delta: float | None = None  # precomputed calibration; used when delta == "auto"
    threads: int = field(default_factory=default_threads, compare=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.k_splits < 1:
            raise ConfigError(f"k_splits must be >= 1, got {self.k_splits}")
        if self.eps <= 0 or self.eps1 <= 0:
            raise ConfigError("eps and eps1 must be positive")
        if self.n is not None and self.n < 3:
            raise ConfigError(f"split size n must be >= 3, got {self.n}")
        if isinstance(self.theta, str):
            if self.theta != "auto":
                raise ConfigError(f"theta must be a positive number or 'auto', got {self.theta!r}")
        elif not (self.theta > 0 and math.isfinite(self.theta)):
            raise ConfigError(f"theta must be positive, got {self.theta}")
        if isinstance(self.delta, str):
            if self.delta not in DELTA_MODES:
                raise ConfigError(f"delta must be a number or one of {DELTA_MODES}, got {self.delta!r}")
        elif not (self.alpha < self.delta < 1.0):
            raise ConfigError(f"explicit delta must lie in (alpha, 1) = ({self.alpha}, 1), got {self.delta}")
        if self.calibrated_delta is not None and not 0.0 <= self.calibrated_delta < 1.0:
            raise ConfigError(f"calibrated delta must lie in [0, 1), got {self.calibrated_delta}")
        if self.max_resample_rounds < 1:
            raise ConfigError("max_resample_rounds must be >= 1")
        if self.calibration_b < 1:
            raise ConfigError("calibration_b must be >= 1")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    def resolved_n(self, n1: int, n2: int) -> int:
        n = self.n if self.n is not None else default_split_size(n1, n2)
        check_split_size(n, n1, n2)
        return n

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k_splits": self.k_splits,
            "alpha": self.alpha,
            "eps": self.eps,
            "eps1": self.eps1,
            "theta": self.theta,
            "delta": self.delta,
            "seed": self.seed,
            "max_resample_rounds": self.max_resample_rounds,
            "calibration_b": self.calibration_b,
            "calibrated_delta": self.calibrated_delta,
        }


@dataclass(frozen=True)
class SplitSpectra:
    """Retained spectra of K splits, each array shaped (K, n - 1)."""

    x: NDArray[np.float64]
    y: NDArray[np.float64]
    z: NDArray[np.float64]
    n: int
    round: int = 0

    @property
    def k(self) -> int:
        return int(self.x.shape[0])


@dataclass(frozen=True)
class SplitOutcome:
    """Per-split arrays produced by evaluating spectra at one bandwidth multiplier."""

    tags: NDArray[np.int8]
    gamma: NDArray[np.float64]
    eta0: NDArray[np.float64]
    t_x: NDArray[np.float64]
    t_y: NDArray[np.float64]
    votes: NDArray[np.int8]

    @property
    def t(self) -> NDArray[np.float64]:
        return self.t_x - self.t_y

    def counts(self) -> tuple[int, int, int]:
        return (int(np.sum(self.tags == SplitTag.AUTO_REJECT)),
                int(np.sum(self.tags == SplitTag.EFFICIENT)),
                int(np.sum(self.tags == SplitTag.DISCARDED)))

    def decision_ratio(self) -> float:
        used = self.tags != SplitTag.DISCARDED
        n_used = int(used.sum())
        if n_used == 0:
            raise NoUsableSplitsError("no auto-reject or efficient splits")
        return float(self.votes[used].sum()) / n_used


@dataclass(frozen=True)
class DecisionSummary:
    dr: float
    n_auto_reject: int
    n_efficient: int
    n_discarded: int
    delta_used: float
    reject: bool
    theta: float
    n: int
    resample_rounds: int
    outcome: SplitOutcome = field(repr=False)

    @property
    def n_votes(self) -> int:
        used = self.outcome.tags != SplitTag.DISCARDED
        return int(self.outcome.votes[used].sum())

    @property
    def records(self) -> list[SplitRecord]:
        o = self.outcome
        return [
            SplitRecord(
                gamma=float(o.gamma[i]), eta0=float(o.eta0[i]), t_x=float(o.t_x[i]), t_y=float(o.t_y[i]),
                t=float(o.t_x[i] - o.t_y[i]),
                split_class=SplitClass(tag=SplitTag(int(o.tags[i])), gamma=float(o.gamma[i])),
                vote=int(o.votes[i]),
            )
            for i in range(len(o.tags))
        ]


def _chunk_spectra(X: NDArray[np.float64], Y: NDArray[np.float64], n: int, seed: int,
                   round_: int, start: int, stop: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n1, n2 = X.shape[0], Y.shape[0]
    triples = [_draw_indices(n1, n2, n, split_rng(seed, i, round_)) for i in range(start, stop)]
    xi = np.stack([t.x_indices for t in triples])
    yi = np.stack([t.y_indices for t in triples])
    zi = np.stack([t.z_indices for t in triples])
    zparent = X if triples[0].z_source == "x" else Y
    return batch_spectra(X[xi]), batch_spectra(Y[yi]), batch_spectra(zparent[zi])


def compute_split_spectra(X: DataMatrix | np.ndarray, Y: DataMatrix | np.ndarray, n: int,
                          k_splits: int, seed: int, round_: int = 0, threads: int = 1) -> SplitSpectra:
    """Draw K splits (each from its own sub-seed) and return their spectra."""
    X = as_data_matrix(X)
    Y = as_data_matrix(Y)
    if X.p != Y.p:
        raise DimensionError(f"feature counts differ: {X.p} vs {Y.p}")
    check_split_size(n, X.n, Y.n)
    bounds = [(s, min(s + _CHUNK, k_splits)) for s in range(0, k_splits, _CHUNK)]

    def work(b: tuple[int, int]):
        return _chunk_spectra(X.values, Y.values, n, seed, round_, *b)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    ex = np.concatenate([p[0] for p in parts])
    ey = np.concatenate([p[1] for p in parts])
    ez = np.concatenate([p[2] for p in parts])
    return SplitSpectra(x=ex, y=ey, z=ez, n=n, round=round_)


def evaluate_splits(spectra: SplitSpectra, theta: float, alpha: float, eps: float = 0.05,
                    eps1: float = 0.05, v: VarianceConstant | float | None = None,
                    classification: tuple[NDArray[np.int8], NDArray[np.float64]] | None = None) -> SplitOutcome:
    """Classify splits and compute statistics and votes at bandwidth multiplier theta."""
    if classification is None:
        tags, gamma = classify_batch(spectra.x, spectra.y, spectra.z, eps, eps1)
    else:
        tags, gamma = classification
    z_std = spectra.z.std(axis=1)
    efficient = tags == SplitTag.EFFICIENT
    if np.any(efficient & ~(z_std > 0.0)):
        raise DegenerateSpectrumError("reference spectrum has zero spread; bandwidth undefined")
    eta0 = theta * z_std
    ok = eta0 > 0.0
    t_x = np.full(gamma.shape, np.nan)
    t_y = np.full(gamma.shape, np.nan)
    if np.any(ok):
        t_x[ok] = local_statistic_batch(spectra.x[ok], gamma[ok], eta0[ok])
        t_y[ok] = local_statistic_batch(spectra.y[ok], gamma[ok], eta0[ok])
    crit = critical_value(alpha, v)
    votes = np.zeros(gamma.shape, dtype=np.int8)
    votes[efficient] = (np.abs(t_x[efficient] - t_y[efficient]) >= crit).astype(np.int8)
    votes[tags == SplitTag.AUTO_REJECT] = 1
    return SplitOutcome(tags=tags, gamma=gamma, eta0=np.where(ok, eta0, np.nan), t_x=t_x, t_y=t_y, votes=votes)


def usable_split_spectra(X: DataMatrix, Y: DataMatrix, n: int, config: TestConfig) -> tuple[SplitSpectra, tuple]:
    """Split spectra for the first round that yields at least one usable split."""
    for round_ in range(config.max_resample_rounds):
        spectra = compute_split_spectra(X, Y, n, config.k_splits, config.seed, round_, config.threads)
        tags, gamma = classify_batch(spectra.x, spectra.y, spectra.z, config.eps, config.eps1)
        if np.any(tags != SplitTag.DISCARDED):
            return spectra, (tags, gamma)
    raise NoUsableSplitsError(
        f"every split was discarded in {config.max_resample_rounds} rounds of {config.k_splits}: "
        "the two spectra never overlap around the reference median, yet are never far enough "
        "apart to reject automatically; try a larger eps1 or a different split size")


def dr_threshold(k_splits: int, alpha: float, mode: str = "binomial") -> float:
    """Asymptotic decision-ratio threshold for K splits at level alpha."""
    if k_splits < 1:
        raise ConfigError(f"k_splits must be >= 1, got {k_splits}")
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if mode == "gaussian":
        z = stats.norm.ppf(1.0 - alpha / 2.0)
        return float(alpha + z * math.sqrt(alpha * (1.0 - alpha) / k_splits))
    if mode == "binomial":
        return float(stats.binom.ppf(1.0 - alpha, k_splits, alpha)) / k_splits
    raise ConfigError(f"unknown threshold mode {mode!r}")


def run_test(X: DataMatrix | np.ndarray, Y: DataMatrix | np.ndarray,
             config: TestConfig | None = None) -> DecisionSummary:
    """Run the full repeated-split test of H0: Sigma_1 = Sigma_2."""
    config = config or TestConfig()
    X = as_data_matrix(X)
    Y = as_data_matrix(Y)
    if X.p != Y.p:
        raise DimensionError(f"feature counts differ: {X.p} vs {Y.p}")
    n = config.resolved_n(X.n, Y.n)
    v = variance_constant()

    spectra, classification = usable_split_spectra(X, Y, n, config)

    if config.theta == "auto":
        from .tuning import select_theta_from_spectra

        theta = select_theta_from_spectra(spectra, config, classification=classification)
    else:
        theta = float(config.theta)

    outcome = evaluate_splits(spectra, theta, config.alpha, config.eps, config.eps1, v, classification)
    dr = outcome.decision_ratio()
    delta = resolve_delta(config, X.n, Y.n, n, X.p, theta)
    n_auto, n_eff, n_disc = outcome.counts()
    return DecisionSummary(
        dr=dr, n_auto_reject=n_auto, n_efficient=n_eff, n_discarded=n_disc,
        delta_used=delta, reject=bool(dr > delta), theta=theta, n=n,
        resample_rounds=spectra.round + 1, outcome=outcome,
    )


def resolve_delta(config: TestConfig, n1: int, n2: int, n: int, p: int, theta: float) -> float:
    if not isinstance(config.delta, str):
        return float(config.delta)
    if config.delta == "auto":
        if config.calibrated_delta is not None:
            return float(config.calibrated_delta)
        from .tuning import calibrate_delta

        cal = calibrate_delta(n1, n2, n, p, config.k_splits, config.alpha, config.calibration_b,
                              theta, config.seed, threads=config.threads, eps=config.eps, eps1=config.eps1)
        return cal.delta
    return dr_threshold(config.k_splits, config.alpha, config.delta)


def with_overrides(config: TestConfig, **kwargs) -> TestConfig:
    return replace(config, **kwargs)
