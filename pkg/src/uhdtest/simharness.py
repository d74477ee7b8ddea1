"""
Simulation scenarios (Cases I-III with Gaussian or two-point innovations) and
size/power sweeps at desk scale.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from .errors import ConfigError, PSDError
from .procedure import TestConfig, run_test
from .rmtlab import PopulationSpectrum
from .spectra import DataMatrix

__all__ = [
    "Scenario",
    "PopulationPair",
    "SweepResult",
    "toeplitz_sigma",
    "ma1_delta",
    "haar_orthogonal",
    "gen_population",
    "gen_sample",
    "draw_innovations",
    "empirical_size_power",
    "power_curve",
    "desk_scenario",
    "TWO_POINT_KAPPA4",
    "DESK_THETA",
    "desk_config",
]

CASES = ("I", "II", "III")
DISTRIBUTIONS = ("gaussian", "two_point")
HYPOTHESES = ("null", "alternative")
TWO_POINT_KAPPA4 = -1.5
# bandwidth multiplier for desk-scale sweeps (p = 500, n = 35); see README
DESK_THETA = 1.2


@dataclass(frozen=True)
class Scenario:
    case_id: str
    p: int
    n1: int
    n2: int
    dist: str = "gaussian"
    hypothesis: str = "null"
    param: float | None = None  # Case II theta or Case III epsilon
    scenario_seed: int = 0

    def __post_init__(self) -> None:
        if self.case_id not in CASES:
            raise ConfigError(f"unknown case {self.case_id!r}; expected one of {CASES}")
        if self.dist not in DISTRIBUTIONS:
            raise ConfigError(f"unknown distribution {self.dist!r}; expected one of {DISTRIBUTIONS}")
        if self.hypothesis not in HYPOTHESES:
            raise ConfigError(f"unknown hypothesis {self.hypothesis!r}")
        if self.p < 1 or self.n1 < 3 or self.n2 < 3:
            raise ConfigError("need p >= 1 and n1, n2 >= 3")
        needs_param = self.hypothesis == "alternative" and self.case_id in ("II", "III")
        if needs_param:
            if self.param is None or not self.param > 0:
                raise ConfigError(f"case {self.case_id} alternative needs a positive parameter")
        elif self.param is not None:
            raise ConfigError(f"parameter given for case {self.case_id} {self.hypothesis}, which takes none")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PopulationPair:
    """Factors A_i with Sigma_i = A_i A_i^T, and the two population spectra."""

    sigma1_factor: NDArray[np.float64]
    sigma2_factor: NDArray[np.float64]
    sigma1_eigs: PopulationSpectrum
    sigma2_eigs: PopulationSpectrum


@dataclass(frozen=True)
class SweepResult:
    scenario: Scenario
    reps: int
    rejections: int
    rejection_rate: float
    mean_dr: float
    wall_time: float
    delta: float
    theta: float | str
    drs: tuple[float, ...] = field(default=(), repr=False)
    votes: tuple[int, ...] = field(default=(), repr=False)

    def row(self) -> dict:
        out = self.scenario.to_dict()
        out.update(reps=self.reps, rejection_rate=self.rejection_rate, mean_dr=self.mean_dr,
                   wall_time=round(self.wall_time, 3), delta=self.delta, theta=self.theta)
        return out


def toeplitz_sigma(p: int, rho: float = 0.5) -> NDArray[np.float64]:
    return linalg.toeplitz(rho ** np.arange(p))


def ma1_delta(p: int, theta: float) -> NDArray[np.float64]:
    delta = np.diag(np.full(p, theta ** 2))
    idx = np.arange(p - 1)
    delta[idx, idx + 1] = theta
    delta[idx + 1, idx] = theta
    return delta


def haar_orthogonal(p: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """Haar-distributed orthogonal matrix: QR of a Gaussian matrix with sign-fixed R diagonal."""
    q, r = np.linalg.qr(rng.standard_normal((p, p)))
    return q * np.sign(np.diag(r))


def _sym_factor(sigma: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    w, v = np.linalg.eigh(sigma)
    if w.min() <= 0:
        raise PSDError(f"covariance is not positive definite (smallest eigenvalue {w.min():.3e})")
    return (v * np.sqrt(w)) @ v.T, w


def gen_population(scenario: Scenario, rng: np.random.Generator | None = None) -> PopulationPair:
    """Build Sigma_1 = Sigma* and Sigma_2 (equal to Sigma* under the null)."""
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([scenario.scenario_seed, 0x9090]))
    p = scenario.p
    alt = scenario.hypothesis == "alternative"

    if scenario.case_id == "I":
        a1, w1 = _sym_factor(toeplitz_sigma(p))
        if alt:
            d = np.sqrt(rng.uniform(0.5, 2.5, size=p))
            a2 = d[:, None] * a1
            w2 = np.linalg.eigvalsh(d[:, None] * toeplitz_sigma(p) * d[None, :])
        else:
            a2, w2 = a1, w1
    elif scenario.case_id == "II":
        a1, w1 = np.eye(p), np.ones(p)
        if alt:
            theta = float(scenario.param)
            k = np.arange(1, p + 1)
            analytic = 1.0 + theta ** 2 + 2.0 * theta * np.cos(k * np.pi / (p + 1))
            if analytic.min() <= 0:
                raise PSDError(f"I + Delta is not positive definite for theta={theta}")
            a2, w2 = _sym_factor(np.eye(p) + ma1_delta(p, theta))
        else:
            a2, w2 = a1, w1
    else:
        q = haar_orthogonal(p, rng)
        d = rng.uniform(3.0, 6.0, size=p)
        a1, w1 = q * np.sqrt(d), np.sort(d)
        if alt:
            eps = float(scenario.param)
            a2, w2 = q * np.sqrt(d + eps), np.sort(d + eps)
        else:
            a2, w2 = a1, w1
    return PopulationPair(sigma1_factor=a1, sigma2_factor=a2,
                          sigma1_eigs=PopulationSpectrum(w1), sigma2_eigs=PopulationSpectrum(w2))


def draw_innovations(shape: tuple[int, ...], dist: str, rng: np.random.Generator) -> NDArray[np.float64]:
    """Standardised i.i.d. entries: N(0, 1), or sqrt(2) w.p. 1/3 and -sqrt(2)/2 w.p. 2/3."""
    if dist == "gaussian":
        return rng.standard_normal(shape)
    if dist == "two_point":
        hi = rng.random(shape) < 1.0 / 3.0
        return np.where(hi, math.sqrt(2.0), -math.sqrt(2.0) / 2.0)
    raise ConfigError(f"unknown distribution {dist!r}")


def gen_sample(factor: NDArray[np.float64], n: int, dist: str, rng: np.random.Generator) -> DataMatrix:
    """n rows of A xi; ``factor`` may be None for the identity."""
    if n < 3:
        raise ConfigError(f"need n >= 3 rows, got {n}")
    factor = np.asarray(factor, dtype=np.float64)
    xi = draw_innovations((n, factor.shape[1]), dist, rng)
    return DataMatrix(xi @ factor.T)


def _rep_seeds(scenario_seed: int, rep: int) -> tuple[np.random.Generator, int]:
    data_seq, split_seq = np.random.SeedSequence([int(scenario_seed), 0x5EED, int(rep)]).spawn(2)
    return np.random.default_rng(data_seq), int(split_seq.generate_state(1, dtype=np.uint64)[0])


def _resolve_sweep_delta(scenario: Scenario, config: TestConfig) -> float | str:
    if config.delta != "auto":
        return config.delta
    if config.calibrated_delta is not None:
        return float(config.calibrated_delta)
    if config.theta == "auto":
        raise ConfigError("calibrated delta in a sweep needs a fixed numeric theta")
    from .tuning import calibrate_delta

    n = config.resolved_n(scenario.n1, scenario.n2)
    cal = calibrate_delta(scenario.n1, scenario.n2, n, scenario.p, config.k_splits, config.alpha,
                          config.calibration_b, float(config.theta), config.seed,
                          threads=config.threads, eps=config.eps, eps1=config.eps1)
    return cal.delta


def empirical_size_power(scenario: Scenario, reps: int, config: TestConfig,
                         population: PopulationPair | None = None,
                         delta: float | None = None) -> SweepResult:
    """Run the test on ``reps`` independent data sets drawn from the scenario.

    A calibrated delta is computed once per sweep (or passed in via ``delta``)
    rather than once per replicate.
    """
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")
    start = time.perf_counter()
    pop = population or gen_population(scenario)
    resolved = delta if delta is not None else _resolve_sweep_delta(scenario, config)

    def one(rep: int) -> tuple[bool, float, int]:
        rng, split_seed = _rep_seeds(scenario.scenario_seed, rep)
        X = gen_sample(pop.sigma1_factor, scenario.n1, scenario.dist, rng)
        Y = gen_sample(pop.sigma2_factor, scenario.n2, scenario.dist, rng)
        if isinstance(resolved, str):
            cfg = replace(config, seed=split_seed, threads=1, delta=resolved)
        else:
            cfg = replace(config, seed=split_seed, threads=1, delta="auto", calibrated_delta=float(resolved))
        summary = run_test(X, Y, cfg)
        return summary.reject, summary.dr, summary.n_votes

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(one, range(reps)))
    else:
        results = [one(r) for r in range(reps)]
    rejections = sum(r for r, _, _ in results)
    drs = tuple(d for _, d, _ in results)
    mean_dr = float(np.mean(drs))
    delta_out = float(resolved) if not isinstance(resolved, str) else float("nan")
    if isinstance(resolved, str):
        from .procedure import dr_threshold

        delta_out = dr_threshold(config.k_splits, config.alpha, resolved)
    return SweepResult(scenario=scenario, reps=reps, rejections=rejections,
                       rejection_rate=rejections / reps, mean_dr=mean_dr,
                       wall_time=time.perf_counter() - start, delta=delta_out, theta=config.theta,
                       drs=drs, votes=tuple(v for _, _, v in results))


def power_curve(base: Scenario, eps_grid, reps: int, config: TestConfig,
                delta: float | None = None) -> list[SweepResult]:
    """Case III sweep over epsilon; epsilon = 0 runs the null scenario."""
    if base.case_id != "III":
        raise ConfigError("power curves are defined for case III")
    grid = [float(e) for e in eps_grid]
    if not grid:
        raise ConfigError("epsilon grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("epsilon grid must be increasing")
    if delta is None:
        resolved = _resolve_sweep_delta(base, config)
        delta = None if isinstance(resolved, str) else resolved
    out = []
    for eps in grid:
        if eps == 0:
            sc = replace(base, hypothesis="null", param=None)
        else:
            sc = replace(base, hypothesis="alternative", param=eps)
        out.append(empirical_size_power(sc, reps, config, delta=delta))
    return out


def desk_scenario(case_id: str = "I", hypothesis: str = "null", dist: str = "gaussian",
                  param: float | None = None, seed: int = 0) -> Scenario:
    """p = 500, n1 = n2 = 80 (so the default split size is 35)."""
    return Scenario(case_id=case_id, p=500, n1=80, n2=80, dist=dist, hypothesis=hypothesis,
                    param=param, scenario_seed=seed)


def desk_config(seed: int = 0, calibrated_delta: float | None = None, threads: int = 1) -> TestConfig:
    """K = 100 splits, fixed theta, calibrated delta (computed on first use unless supplied)."""
    return TestConfig(k_splits=100, theta=DESK_THETA, delta="auto", calibration_b=200, seed=seed,
                      calibrated_delta=calibrated_delta, threads=threads)
