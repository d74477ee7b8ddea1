import math

import numpy as np
import pytest
from scipy import integrate, stats

from uhdtest.errors import InvalidBandwidthError
from uhdtest.splitkit import SplitClass, SplitTag
from uhdtest.teststat import (
    critical_value,
    divided_difference_integral,
    local_statistic,
    local_statistic_batch,
    mollifier,
    mollifier_derivative,
    split_decision,
    split_record,
    tail_brute_force,
    tail_closed_form,
    two_sample_statistic,
    variance_adaptive,
    variance_constant,
    variance_gauss_legendre,
)

# frozen after the two quadratures agreed to ~1e-15
V_GOLDEN = 1.573376148229943
# 40-digit evaluation of exp(400 - 1/(0.0025 - 0.02**2))
K_102 = 8.145103680542488e-34


def test_mollifier_values():
    assert mollifier(0.0) == 1.0
    assert mollifier(2.0) == 0.0
    assert mollifier(1.0) == 1.0 and mollifier(1.05) == 0.0
    assert mollifier(1.02) == pytest.approx(K_102, rel=1e-12)


def test_mollifier_even_continuous_monotone():
    x = np.linspace(1.0, 1.05, 10_001)
    k = mollifier(x)
    np.testing.assert_array_equal(k, mollifier(-x))
    assert np.all(np.diff(k) <= 0)
    assert np.all((k[1:-1] >= 0) & (k[1:-1] < 1))
    # continuity at both joins
    assert mollifier(1.0 + 1e-9) == pytest.approx(1.0, abs=1e-9)
    assert mollifier(1.05 - 1e-6) < 1e-300


def test_derivative_matches_finite_difference():
    x = np.array([1.005, 1.01, 1.02, 1.03, -1.015])
    h = 1e-7
    fd = (mollifier(x + h) - mollifier(x - h)) / (2 * h)
    np.testing.assert_allclose(mollifier_derivative(x), fd, rtol=1e-5, atol=1e-12)


def test_local_statistic_examples():
    g, eta = 2.0, 0.4
    assert local_statistic([g + 0.5 * eta, g + 3 * eta], g, eta) == pytest.approx(0.5, rel=1e-14)
    assert local_statistic([g + 2 * eta, g - 1.2 * eta], g, eta) == 0.0
    assert local_statistic([g + 0.3 * eta, g - 0.3 * eta], g, eta) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(InvalidBandwidthError):
        local_statistic([1.0], 1.0, 0.0)


def test_two_sample_examples():
    g, eta = 1.0, 0.25
    a = [1.1, 0.95, 0.8]
    b = [1.2, 1.0, 0.9]
    assert two_sample_statistic(a, a, g, eta) == 0.0
    assert two_sample_statistic(a, b, g, eta) == -two_sample_statistic(b, a, g, eta)
    assert two_sample_statistic([g], [g + 0.9 * eta], g, eta) == pytest.approx(-0.9, rel=1e-14)


def test_window_locality(rng):
    eigs = np.sort(rng.uniform(0, 4, 30))[::-1]
    g, eta = 2.0, 0.3
    base = local_statistic(eigs, g, eta)
    moved = eigs.copy()
    far = np.abs(eigs - g) >= 1.05 * eta
    moved[far] += np.sign(eigs[far] - g) * rng.uniform(0, 5, far.sum())
    assert local_statistic(moved, g, eta) == base


def test_batch_matches_scalar(rng):
    eigs = rng.uniform(0, 3, (6, 20))
    g = rng.uniform(1, 2, 6)
    eta = rng.uniform(0.1, 0.5, 6)
    batched = local_statistic_batch(eigs, g, eta)
    for i in range(6):
        assert batched[i] == pytest.approx(local_statistic(eigs[i], g[i], eta[i]), rel=1e-13, abs=1e-15)


def test_variance_constant_golden():
    vc = variance_constant()
    assert vc.v == pytest.approx(V_GOLDEN, rel=1e-12)
    assert vc.est_error <= 1e-6 * vc.v
    assert variance_constant() is vc


def test_two_quadratures_agree():
    a, _ = variance_adaptive()
    b = variance_gauss_legendre()
    assert abs(a - b) <= 1e-6 * a


def test_constant_kernel_integrates_to_zero():
    edges = np.linspace(-2, 2, 9)
    val = divided_difference_integral(lambda x: np.full_like(np.asarray(x, float), 0.7),
                                      lambda x: np.zeros_like(np.asarray(x, float)), edges)
    assert val == 0.0


def test_integrator_on_known_kernel():
    # K(x) = x on [0, 1]: integrand is identically 1, so the integral is the area
    edges = np.linspace(0.0, 1.0, 5)
    val = divided_difference_integral(lambda x: np.asarray(x, float), lambda x: np.ones_like(np.asarray(x, float)),
                                      edges)
    assert val == pytest.approx(1.0, rel=1e-13)


def test_tail_closed_form_identity():
    x = 0.3
    brute, _ = integrate.quad(lambda y: 1 / (x - y) ** 2, 1.05, np.inf)
    brute2, _ = integrate.quad(lambda y: 1 / (x - y) ** 2, -np.inf, -1.05)
    assert tail_closed_form(x) == pytest.approx(brute + brute2, rel=1e-10)


def test_tail_brute_vs_closed():
    brute, closed = tail_brute_force()
    assert abs(brute - closed) <= 1e-5 * abs(closed)


def test_split_decision():
    v = variance_constant()
    crit = critical_value(0.05, v)
    assert crit == pytest.approx(stats.norm.ppf(0.975) * math.sqrt(2 * V_GOLDEN), rel=1e-12)
    assert split_decision(0.0, 0.05, v) == 0
    assert split_decision(1e6, 0.05, v) == 1
    assert split_decision(-crit, 0.05, v) == 1
    assert split_decision(np.nextafter(crit, 0), 0.05, v) == 0


def test_split_record_invariants():
    rec = split_record(SplitClass(SplitTag.AUTO_REJECT, 3.0))
    assert rec.vote == 1
    rec = split_record(SplitClass(SplitTag.EFFICIENT, 3.0), t_x=0.75, t_y=0.25, eta0=0.1, vote=0)
    assert rec.t == 0.5 and rec.to_dict()["class"] == "efficient"
