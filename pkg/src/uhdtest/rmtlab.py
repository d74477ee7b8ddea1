"""
Random-matrix oracles for the (pn)^(-1/2)-scaled sample covariance.

The limiting spectral law is described through the Stieltjes transform m(z),
the unique solution in the upper half plane of

    1/m = -z + (1/p) * sum_j phi / (phi^(1/2) / sigma_j + m),

with phi = p / n. For large phi it is close to a semicircle centred at
m1 * phi^(1/2) with radius 2 * sqrt(m2), where m_k are moments of the
population spectrum. Everything here is a validation tool; the test itself
never needs the population covariance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, interpolate, optimize

from .errors import ConvergenceError, DimensionError, InvalidBandwidthError
from .teststat import SUPPORT, mollifier

__all__ = [
    "PopulationSpectrum",
    "SpectralModel",
    "ClassicalLocations",
    "esd_moments",
    "stieltjes_fixed_point",
    "fixed_point_residual",
    "density_from_stieltjes",
    "support_edges",
    "exact_model",
    "semicircle_model",
    "retained_model",
    "classical_locations",
    "theoretical_mean",
    "local_alternative_strength",
]

DEFAULT_ETA_LADDER = tuple(np.geomspace(1e-2, 1e-6, 5))


@dataclass(frozen=True)
class PopulationSpectrum:
    """Eigenvalues of a population covariance matrix."""

    sigma: NDArray[np.float64]

    def __post_init__(self) -> None:
        sigma = np.asarray(self.sigma, dtype=np.float64).ravel()
        if sigma.size == 0:
            raise DimensionError("population spectrum is empty")
        if not np.all(np.isfinite(sigma)) or sigma.min() <= 0:
            raise DimensionError("population eigenvalues must be finite and strictly positive")
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def identity(cls, p: int) -> "PopulationSpectrum":
        return cls(np.ones(p))

    @property
    def p(self) -> int:
        return int(self.sigma.size)

    def atoms(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Distinct eigenvalues with their weights (sum to one)."""
        vals, counts = np.unique(np.round(self.sigma, 14), return_counts=True)
        return vals, counts / counts.sum()


def esd_moments(pop: PopulationSpectrum | ArrayLike, k: int) -> float:
    if k < 1:
        raise ValueError(f"moment order must be >= 1, got {k}")
    sigma = pop.sigma if isinstance(pop, PopulationSpectrum) else np.asarray(pop, dtype=np.float64)
    return float(np.mean(sigma ** k))


def _as_pop(pop) -> PopulationSpectrum:
    return pop if isinstance(pop, PopulationSpectrum) else PopulationSpectrum(np.asarray(pop))


def _s_terms(pop: PopulationSpectrum, phi: float):
    vals, weights = pop.atoms()
    poles = math.sqrt(phi) / vals  # phi^(1/2) * sigma^(-1)
    return poles, weights


def fixed_point_residual(m: complex, z: complex, pop: PopulationSpectrum, phi: float) -> float:
    poles, weights = _s_terms(_as_pop(pop), phi)
    s = np.sum(weights * phi / (poles + m))
    return abs(1.0 / m - (-z + s)) * abs(m)


def stieltjes_fixed_point(z: complex, pop: PopulationSpectrum | ArrayLike, phi: float,
                          tol: float = 1e-12, max_iter: int = 10_000, damping: float = 0.5,
                          start: complex | None = None) -> complex:
    """Solve the self-consistent equation for m(z), Im z > 0.

    Damped fixed-point iteration from m = i (or ``start``); once the iteration
    is close, Newton steps finish the job so near-real z converges in a few
    hundred steps rather than thousands.
    """
    z = complex(z)
    if not z.imag > 0:
        raise ValueError(f"z must lie in the upper half plane, got {z}")
    if not phi > 0:
        raise ValueError(f"phi must be positive, got {phi}")
    pop = _as_pop(pop)
    poles, weights = _s_terms(pop, phi)
    w_phi = weights * phi

    def s_of(m: complex) -> complex:
        return complex(np.sum(w_phi / (poles + m)))

    def ds_of(m: complex) -> complex:
        return complex(-np.sum(w_phi / (poles + m) ** 2))

    def residual(m: complex) -> float:
        return abs(m * (-z + s_of(m)) - 1.0)

    m = complex(start) if start is not None and start.imag > 0 else 1j
    for it in range(max_iter):
        target = 1.0 / (-z + s_of(m))
        m_new = (1.0 - damping) * m + damping * target
        if m_new.imag <= 0:
            m_new = complex(m_new.real, abs(m_new.imag) + 1e-300)
        m = m_new
        r = residual(m)
        if r < tol:
            return m
        if it >= 50 and it % 10 == 0 and r < 1e-3:
            # Newton on F(m) = 1/m + z - S(m)
            cand = m
            for _ in range(50):
                f = 1.0 / cand + z - s_of(cand)
                fp = -1.0 / cand ** 2 - ds_of(cand)
                step = f / fp
                cand = cand - step
                if abs(step) < 1e-16 * max(1.0, abs(cand)):
                    break
            if cand.imag > 0 and residual(cand) < tol:
                return cand
    raise ConvergenceError(f"fixed point for z={z} did not converge in {max_iter} iterations "
                           f"(residual {residual(m):.3e})")


def density_from_stieltjes(x: float, pop: PopulationSpectrum | ArrayLike, phi: float,
                           eta_ladder: ArrayLike = DEFAULT_ETA_LADDER) -> float:
    """pi^-1 Im m(x + i eta), Richardson-extrapolated over the two smallest rungs."""
    ladder = np.asarray(eta_ladder, dtype=np.float64)
    if ladder.size < 2 or np.any(np.diff(ladder) >= 0) or ladder.min() <= 0:
        raise ValueError("eta ladder must be a decreasing sequence of positive values")
    pop = _as_pop(pop)
    m = None
    vals = []
    for eta in ladder:
        m = stieltjes_fixed_point(complex(x, eta), pop, phi, start=m)
        vals.append(m.imag / math.pi)
    e1, e2 = ladder[-2], ladder[-1]
    d1, d2 = vals[-2], vals[-1]
    est = (e1 * d2 - e2 * d1) / (e1 - e2)
    return max(0.0, float(est))


def support_edges(pop: PopulationSpectrum | ArrayLike, phi: float) -> tuple[float, float]:
    """Exact edges of the limiting support from the critical points of z(m) on the real line."""
    pop = _as_pop(pop)
    poles, weights = _s_terms(pop, phi)
    w_phi = weights * phi

    def z_of(m: float) -> float:
        return -1.0 / m + float(np.sum(w_phi / (poles + m)))

    def dz(m: float) -> float:
        return 1.0 / m ** 2 - float(np.sum(w_phi / (poles + m) ** 2))

    a_min = float(poles.min())
    # upper edge: m in (-a_min, 0)
    lo, hi = -a_min * (1 - 1e-12), -1e-12
    m_plus = optimize.brentq(dz, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    # lower edge: m in (0, inf); dz > 0 near 0+, < 0 for large m when phi > 1
    right = 1.0
    while dz(right) > 0:
        right *= 2.0
        if right > 1e12:
            raise ConvergenceError("could not bracket the lower support edge (phi <= 1?)")
    m_minus = optimize.brentq(dz, 1e-12, right, xtol=1e-15, rtol=1e-15, maxiter=500)
    return z_of(m_minus), z_of(m_plus)


@dataclass(frozen=True)
class SpectralModel:
    """Limiting density of the scaled spectrum, with its support, CDF and moments."""

    phi: float
    m1: float
    m2: float
    support: tuple[float, float]
    density: Callable[[float], float] = field(repr=False)
    cdf: Callable[[float], float] = field(repr=False)
    mode: str = "semicircle"
    scale: float = 1.0

    @property
    def center(self) -> float:
        return self.scale * self.m1 * math.sqrt(self.phi)

    def density_grid(self, points: int = 200) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        lo, hi = self.support
        xs = np.linspace(lo, hi, points)
        return xs, np.array([self.density(float(x)) for x in xs])

    def scaled(self, s: float) -> "SpectralModel":
        """Law of s * lambda when lambda follows this model."""
        dens, cdf = self.density, self.cdf
        lo, hi = self.support
        return SpectralModel(
            phi=self.phi, m1=self.m1, m2=self.m2, support=(s * lo, s * hi),
            density=lambda x: dens(x / s) / s, cdf=lambda x: cdf(x / s),
            mode=self.mode, scale=self.scale * s,
        )


def semicircle_model(pop: PopulationSpectrum | ArrayLike, phi: float) -> SpectralModel:
    pop = _as_pop(pop)
    if phi < 10:
        warnings.warn(f"semicircle approximation is crude for phi={phi:g} < 10", stacklevel=2)
    m1, m2 = esd_moments(pop, 1), esd_moments(pop, 2)
    c = m1 * math.sqrt(phi)
    r = 2.0 * math.sqrt(m2)

    def density(x: float) -> float:
        d = 4.0 * m2 - (x - c) ** 2
        return math.sqrt(d) / (2.0 * math.pi * m2) if d > 0 else 0.0

    def cdf(x: float) -> float:
        u = (x - c) / r
        if u <= -1.0:
            return 0.0
        if u >= 1.0:
            return 1.0
        return 0.5 + (u * math.sqrt(1.0 - u * u) + math.asin(u)) / math.pi

    return SpectralModel(phi=phi, m1=m1, m2=m2, support=(c - r, c + r), density=density, cdf=cdf,
                         mode="semicircle")


def exact_model(pop: PopulationSpectrum | ArrayLike, phi: float, grid_points: int = 401,
                eta_ladder: ArrayLike = DEFAULT_ETA_LADDER) -> SpectralModel:
    """Model backed by the fixed-point equation; the CDF is tabulated once."""
    pop = _as_pop(pop)
    lo, hi = support_edges(pop, phi)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    # x = mid - half cos(t) clusters nodes at the square-root edges
    t = np.linspace(0.0, math.pi, grid_points)
    xs = mid - half * np.cos(t)
    dens = np.zeros_like(xs)
    for i in range(1, grid_points - 1):
        dens[i] = density_from_stieltjes(float(xs[i]), pop, phi, eta_ladder)
    integrand = dens * half * np.sin(t)
    cum = integrate.cumulative_trapezoid(integrand, t, initial=0.0)
    total = cum[-1]
    cum /= total

    # the density is smooth in t (square-root edges become sin t), so a spline there is accurate
    spline = interpolate.CubicSpline(t, dens)

    def density(x: float) -> float:
        if x <= lo or x >= hi:
            return 0.0
        tt = math.acos(max(-1.0, min(1.0, (mid - x) / half)))
        return max(0.0, float(spline(tt)))

    def cdf(x: float) -> float:
        if x <= lo:
            return 0.0
        if x >= hi:
            return 1.0
        tt = math.acos(max(-1.0, min(1.0, (mid - x) / half)))
        return float(np.interp(tt, t, cum))

    return SpectralModel(phi=phi, m1=esd_moments(pop, 1), m2=esd_moments(pop, 2), support=(lo, hi),
                         density=density, cdf=cdf, mode="exact")


def retained_model(pop: PopulationSpectrum | ArrayLike, n: int, mode: str = "exact") -> SpectralModel:
    """Model for the n - 1 retained eigenvalues of a mean-centred n-sample block.

    Centering leaves n - 1 effective samples while the scaling still uses n, so
    the law is that of sqrt((n - 1)/n) times the model at phi = p / (n - 1).
    """
    pop = _as_pop(pop)
    n_eff = n - 1
    phi = pop.p / n_eff
    base = exact_model(pop, phi) if mode == "exact" else semicircle_model(pop, phi)
    return base.scaled(math.sqrt(n_eff / n))


@dataclass(frozen=True)
class ClassicalLocations:
    omega: NDArray[np.float64]
    median: float  # the location with mass exactly 1/2 above it


def _upper_quantile(model: SpectralModel, mass: float, tol: float) -> float:
    a, b = model.support
    target = 1.0 - mass
    while b - a > tol:
        mid = 0.5 * (a + b)
        if model.cdf(mid) < target:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def classical_locations(model: SpectralModel, n: int, tol: float = 1e-10) -> ClassicalLocations:
    """omega_i with mass i/n above it, i = 1..n, by bisection on the model CDF."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    omega = np.array([_upper_quantile(model, i / n, tol) for i in range(1, n)] + [model.support[0]])
    return ClassicalLocations(omega=omega, median=_upper_quantile(model, 0.5, tol))


def theoretical_mean(model: SpectralModel, gamma: float, eta0: float, n: int) -> float:
    """n * integral of u K(u) against the model density, u = (t - gamma) / eta0."""
    if not eta0 > 0:
        raise InvalidBandwidthError(f"eta0 must be positive, got {eta0}")
    lo, hi = model.support
    a, b = max(lo, gamma - SUPPORT * eta0), min(hi, gamma + SUPPORT * eta0)
    if a >= b:
        return 0.0

    def f(t: float) -> float:
        u = (t - gamma) / eta0
        return u * float(mollifier(u)) * model.density(t)

    breaks = [x for x in (gamma - eta0, gamma + eta0) if a < x < b]
    val, _ = integrate.quad(f, a, b, points=breaks or None, epsabs=1e-10, epsrel=1e-9, limit=200)
    return n * val


def local_alternative_strength(pop1: PopulationSpectrum | ArrayLike, pop2: PopulationSpectrum | ArrayLike,
                               phi: float, eta0: float, n: int) -> tuple[float, float]:
    """(phi^(1/2) |dm1| + phi^(-1/2) |dm2|, eta0^-2 n^-1); the caller supplies the divergent constant."""
    pop1, pop2 = _as_pop(pop1), _as_pop(pop2)
    if pop1.p != pop2.p:
        raise DimensionError(f"population dimensions differ: {pop1.p} vs {pop2.p}")
    lhs = (math.sqrt(phi) * abs(esd_moments(pop1, 1) - esd_moments(pop2, 1))
           + abs(esd_moments(pop1, 2) - esd_moments(pop2, 2)) / math.sqrt(phi))
    return lhs, 1.0 / (eta0 ** 2 * n)
