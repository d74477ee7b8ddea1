"""
Mollifier-windowed local eigenvalue statistics and the null variance constant.

The kernel is a smoothed indicator of [-1, 1]: exactly 1 on the plateau, exactly
0 beyond 1.05, with C-infinity shoulders of width 0.05 in between.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, stats

from .errors import InvalidBandwidthError, QuadratureError
from .spectra import Spectrum
from .splitkit import SplitClass, SplitTag

__all__ = [
    "SHOULDER",
    "SUPPORT",
    "mollifier",
    "mollifier_derivative",
    "local_statistic",
    "local_statistic_batch",
    "two_sample_statistic",
    "VarianceConstant",
    "variance_constant",
    "variance_adaptive",
    "variance_gauss_legendre",
    "divided_difference_integral",
    "tail_closed_form",
    "tail_brute_force",
    "critical_value",
    "split_decision",
    "SplitRecord",
]

SHOULDER = 0.05
SUPPORT = 1.0 + SHOULDER
_A2 = SHOULDER * SHOULDER
_LOG_FLUSH = -700.0


def _log_shoulder(d: NDArray[np.float64]) -> NDArray[np.float64]:
    # d = |x| - 1 in (0, SHOULDER)
    return 1.0 / _A2 - 1.0 / (_A2 - d * d)


def mollifier(x: ArrayLike) -> NDArray[np.float64] | float:
    """Evaluate the kernel; accepts scalars or arrays."""
    arr = np.abs(np.asarray(x, dtype=np.float64))
    out = np.zeros_like(arr)
    out[arr <= 1.0] = 1.0
    shoulder = (arr > 1.0) & (arr < SUPPORT)
    if np.any(shoulder):
        logk = _log_shoulder(arr[shoulder] - 1.0)
        out[shoulder] = np.where(logk < _LOG_FLUSH, 0.0, np.exp(np.maximum(logk, _LOG_FLUSH)))
    if out.ndim == 0:
        return float(out)
    return out


def _one_minus_mollifier(x: NDArray[np.float64]) -> NDArray[np.float64]:
    """1 - K(x) without cancellation next to the plateau edge."""
    arr = np.abs(np.asarray(x, dtype=np.float64))
    out = np.ones_like(arr)
    out[arr <= 1.0] = 0.0
    shoulder = (arr > 1.0) & (arr < SUPPORT)
    if np.any(shoulder):
        out[shoulder] = -np.expm1(_log_shoulder(arr[shoulder] - 1.0))
    return out


def mollifier_derivative(x: ArrayLike) -> NDArray[np.float64] | float:
    arr = np.asarray(x, dtype=np.float64)
    a = np.abs(arr)
    out = np.zeros_like(arr)
    shoulder = (a > 1.0) & (a < SUPPORT)
    if np.any(shoulder):
        d = a[shoulder] - 1.0
        k = np.asarray(mollifier(a[shoulder]))
        out[shoulder] = -np.sign(arr[shoulder]) * k * 2.0 * d / (_A2 - d * d) ** 2
    if out.ndim == 0:
        return float(out)
    return out


def _check_bandwidth(eta0: float) -> None:
    if not (eta0 > 0.0 and math.isfinite(eta0)):
        raise InvalidBandwidthError(f"bandwidth eta0 must be a positive finite number, got {eta0}")


def local_statistic(spec: Spectrum | ArrayLike, gamma: float, eta0: float) -> float:
    """Sum of u * K(u) over eigenvalues, with u = (lambda - gamma) / eta0."""
    _check_bandwidth(eta0)
    eigs = np.asarray(spec.eigenvalues if isinstance(spec, Spectrum) else spec, dtype=np.float64)
    u = (eigs - gamma) / eta0
    u = u[np.abs(u) < SUPPORT]
    if u.size == 0:
        return 0.0
    return float(np.sum(u * mollifier(u)))


def local_statistic_batch(eigs: NDArray[np.float64], gamma: NDArray[np.float64],
                          eta0: NDArray[np.float64]) -> NDArray[np.float64]:
    """Row-wise local statistic for spectra shaped (k, m) with per-row gamma, eta0."""
    eta0 = np.asarray(eta0, dtype=np.float64)
    if np.any(~(eta0 > 0.0)):
        raise InvalidBandwidthError("all bandwidths must be positive")
    u = (eigs - gamma[:, None]) / eta0[:, None]
    inside = np.abs(u) < SUPPORT
    vals = np.zeros_like(u)
    vals[inside] = u[inside] * mollifier(u[inside])
    return vals.sum(axis=1)


def two_sample_statistic(spec_x: Spectrum | ArrayLike, spec_y: Spectrum | ArrayLike,
                         gamma: float, eta0: float) -> float:
    return local_statistic(spec_x, gamma, eta0) - local_statistic(spec_y, gamma, eta0)


# --------------------------------------------------------------------------
# variance constant: v = (1 / 2 pi^2) * iint (K(x) - K(y))^2 / (x - y)^2


@dataclass(frozen=True)
class VarianceConstant:
    v: float
    method: str
    est_error: float


def tail_closed_form(x: ArrayLike) -> NDArray[np.float64]:
    """Integral over |y| >= 1.05 of dy / (x - y)^2 for |x| < 1.05."""
    x = np.asarray(x, dtype=np.float64)
    return 1.0 / (SUPPORT - x) + 1.0 / (SUPPORT + x)


def _divided_difference_sq(k, dk, x, y):
    """((k(x) - k(y)) / (x - y))^2 with the diagonal limit k'(x)^2."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    diff = x - y
    close = np.abs(diff) < 1e-9
    safe = np.where(close, 1.0, diff)
    out = ((k(x) - k(y)) / safe) ** 2
    if np.any(close):
        out = np.where(close, np.asarray(dk(0.5 * (x + y))) ** 2, out)
    return out


def _pieces_adaptive(k, dk, one_minus_k, tol: float) -> tuple[float, float]:
    """Adaptive quadrature of the reduced pieces; returns (double integral, error)."""
    opts = dict(epsabs=tol, epsrel=tol, limit=400)
    lo, hi = 1.0, SUPPORT

    # shoulder x plateau: inner integral over the plateau is closed-form
    sp, e1 = integrate.quad(
        lambda x: one_minus_k(x) ** 2 * (1.0 / (x - 1.0) - 1.0 / (x + 1.0)) if x > 1.0 else 0.0,
        lo, hi, **opts)
    # shoulder x same shoulder; y = x - h, h in (0, x - 1), doubled by symmetry
    ss, e2 = integrate.dblquad(
        lambda h, x: float(_divided_difference_sq(k, dk, x, x - h)),
        lo, hi, lambda x: 0.0, lambda x: x - 1.0, epsabs=tol, epsrel=tol)
    ss *= 2.0
    e2 *= 2.0
    # shoulder x opposite shoulder (no singularity)
    sx, e3 = integrate.dblquad(
        lambda y, x: float((k(x) - k(y)) ** 2 / (x - y) ** 2),
        lo, hi, lambda x: -hi, lambda x: -lo, epsabs=tol, epsrel=tol)
    # shoulder part of the outside tail
    ts, e4 = integrate.quad(lambda x: k(x) ** 2 * float(tail_closed_form(x)), lo, hi, **opts)
    plateau_tail = 2.0 * math.log((SUPPORT + 1.0) / (SUPPORT - 1.0))

    total = 4.0 * sp + 2.0 * ss + 2.0 * sx + 2.0 * (plateau_tail + 2.0 * ts)
    err = 4.0 * e1 + 2.0 * e2 + 2.0 * e3 + 4.0 * e4
    return total, err


def variance_adaptive(tol: float = 1e-11) -> tuple[float, float]:
    """Adaptive (QUADPACK) evaluation of v over the symmetry-reduced pieces.

    Returns (v, error estimate).
    """
    total, err = _pieces_adaptive(
        lambda x: float(mollifier(x)),
        mollifier_derivative,
        lambda x: float(_one_minus_mollifier(np.asarray(x))),
        tol,
    )
    scale = 1.0 / (2.0 * math.pi ** 2)
    return total * scale, err * scale


def _gl_panels(edges: NDArray[np.float64], order: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    x = 0.5 * (b - a) * nodes[None, :] + 0.5 * (a + b)
    w = 0.5 * (b - a) * weights[None, :]
    return x.ravel(), w.ravel()


def divided_difference_integral(k, dk, edges: ArrayLike, order: int = 24) -> float:
    """Tensor Gauss-Legendre value of iint ((k(x) - k(y)) / (x - y))^2 over a box.

    ``edges`` are panel boundaries along each axis. Same-node pairs take the
    diagonal limit dk(x)^2; all other node pairs are distinct, so the removable
    singularity is never evaluated directly.
    """
    x, w = _gl_panels(np.asarray(edges, dtype=np.float64), order)
    kx = np.asarray(k(x), dtype=np.float64) * np.ones_like(x)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    q = ((kx[:, None] - kx[None, :]) / diff) ** 2
    np.fill_diagonal(q, (np.asarray(dk(x), dtype=np.float64) * np.ones_like(x)) ** 2)
    return float(w @ q @ w)


def _shoulder_edges(n_panels: int) -> NDArray[np.float64]:
    # grade panels toward 1.05 where the kernel has its essential singularity
    t = np.linspace(0.0, 1.0, n_panels + 1)
    return 1.0 + SHOULDER * (1.0 - (1.0 - t) ** 2)


def _kernel_edges(n_panels: int) -> NDArray[np.float64]:
    right = _shoulder_edges(n_panels)
    # geometric grading toward +-1 resolves the corner where a shoulder meets the plateau
    gaps = np.geomspace(1e-6, 1.0, n_panels)
    plateau = np.concatenate([-1.0 + gaps, 1.0 - gaps, [0.0]])
    return np.unique(np.concatenate([-right[::-1], plateau, right]))


def variance_gauss_legendre(n_panels: int = 48, order: int = 24) -> float:
    """Tensorised composite Gauss-Legendre over [-1.05, 1.05]^2 plus the reduced tails."""
    edges = _kernel_edges(n_panels)
    inner = divided_difference_integral(mollifier, mollifier_derivative, edges, order)
    x, w = _gl_panels(edges, order)
    tail = 2.0 * float(np.sum(w * np.asarray(mollifier(x)) ** 2 * tail_closed_form(x)))
    return (inner + tail) / (2.0 * math.pi ** 2)


def tail_brute_force(cutoff: float = 1e7, tol: float = 1e-12) -> tuple[float, float]:
    """Brute 2-D quadrature of the one-sided tail region x in [-1.05, 1.05],
    y in [1.05, cutoff], and the closed-form reduction over the same truncated
    domain; returns (brute, closed)."""
    # y = 1.05 + exp(s) spreads the slowly decaying 1/y^2 tail
    s_lo, s_hi = math.log(1e-12), math.log(cutoff - SUPPORT)

    def integrand(s: float, x: float) -> float:
        y = SUPPORT + math.exp(s)
        return float(mollifier(x)) ** 2 * math.exp(s) / (x - y) ** 2

    brute = 0.0
    for a, b in ((-SUPPORT, -1.0), (-1.0, 1.0), (1.0, SUPPORT)):
        val, _ = integrate.dblquad(integrand, a, b, lambda x: s_lo, lambda x: s_hi,
                                   epsabs=tol, epsrel=tol)
        brute += val

    def closed_integrand(x: float) -> float:
        return float(mollifier(x)) ** 2 * (1.0 / (SUPPORT + 1e-12 - x) - 1.0 / (cutoff - x))

    closed = 0.0
    for a, b in ((-SUPPORT, -1.0), (-1.0, 1.0), (1.0, SUPPORT)):
        val, _ = integrate.quad(closed_integrand, a, b, epsabs=tol, epsrel=tol, limit=400)
        closed += val
    return brute, closed


_VC_LOCK = threading.Lock()
_VC_CACHE: VarianceConstant | None = None
_AGREEMENT_RTOL = 1e-6


def variance_constant() -> VarianceConstant:
    """Compute v once per process by two independent quadratures and cache it."""
    global _VC_CACHE
    if _VC_CACHE is not None:
        return _VC_CACHE
    with _VC_LOCK:
        if _VC_CACHE is None:
            adaptive, adaptive_err = variance_adaptive()
            tensor = variance_gauss_legendre()
            gap = abs(adaptive - tensor)
            if gap > _AGREEMENT_RTOL * abs(adaptive):
                raise QuadratureError(
                    f"quadratures disagree: adaptive={adaptive!r}, gauss-legendre={tensor!r}")
            _VC_CACHE = VarianceConstant(
                v=adaptive,
                method="adaptive QUADPACK pieces, cross-checked by tensor Gauss-Legendre",
                est_error=max(gap, adaptive_err),
            )
    return _VC_CACHE


def critical_value(alpha: float, v: VarianceConstant | float | None = None) -> float:
    """z_{1 - alpha/2} * sqrt(2 v)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if v is None:
        v = variance_constant()
    vv = v.v if isinstance(v, VarianceConstant) else float(v)
    return float(stats.norm.ppf(1.0 - alpha / 2.0)) * math.sqrt(2.0 * vv)


def split_decision(t: float, alpha: float, v: VarianceConstant | float | None = None) -> int:
    """1 when |t| reaches the two-sided critical value (boundary inclusive)."""
    return int(abs(t) >= critical_value(alpha, v))


@dataclass(frozen=True)
class SplitRecord:
    gamma: float
    eta0: float
    t_x: float
    t_y: float
    t: float
    split_class: SplitClass
    vote: int

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "eta0": self.eta0,
            "t_x": self.t_x,
            "t_y": self.t_y,
            "t": self.t,
            "class": self.split_class.tag.name.lower(),
            "vote": self.vote,
        }


def split_record(split_class: SplitClass, t_x: float = math.nan, t_y: float = math.nan,
                 eta0: float = math.nan, vote: int | None = None) -> SplitRecord:
    if split_class.tag == SplitTag.AUTO_REJECT:
        vote = 1
    return SplitRecord(gamma=split_class.gamma, eta0=eta0, t_x=t_x, t_y=t_y, t=t_x - t_y,
                       split_class=split_class, vote=int(vote or 0))
