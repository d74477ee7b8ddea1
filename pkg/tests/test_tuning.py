import numpy as np
import pytest

from uhdtest.errors import ConfigError, DegenerateSpectrumError, GridTooSmallError
from uhdtest.procedure import TestConfig, usable_split_spectra
from uhdtest.spectra import SpectrumSummary
from uhdtest.tuning import (
    CalibrationResult,
    ThetaGrid,
    bandwidth_from_theta,
    calibrate_delta,
    default_theta_grid,
    moving_average,
    pick_index,
    prefix_variances,
    select_theta,
    theta_search,
    upper_quantile,
)


def test_bandwidth():
    s = SpectrumSummary(median=1.0, std=1.5, range=3.0, max=2.0, min=-1.0)
    assert bandwidth_from_theta(0.2, s) == pytest.approx(0.3, rel=1e-15)
    assert bandwidth_from_theta(0.4, s) == 2 * bandwidth_from_theta(0.2, s)
    with pytest.raises(DegenerateSpectrumError):
        bandwidth_from_theta(0.2, 0.0)
    with pytest.raises(ConfigError):
        bandwidth_from_theta(0.0, 1.0)


def test_grid_validation():
    with pytest.raises(GridTooSmallError):
        ThetaGrid((0.1, 0.2, 0.3, 0.4, 0.5))
    with pytest.raises(ConfigError):
        ThetaGrid((0.1, 0.2, 0.2, 0.4, 0.5, 0.6))
    with pytest.raises(ConfigError):
        ThetaGrid((-0.1, 0.2, 0.3, 0.4, 0.5, 0.6))
    g = default_theta_grid()
    assert len(g) == 12 and g.values[0] == 0.15 and g.values[-1] == 1.8


def test_moving_average_and_variances():
    np.testing.assert_allclose(moving_average([0, 3, 6, 9]), [3, 6])
    v = prefix_variances([1.0, 3.0, 5.0], 2)
    np.testing.assert_allclose(v, [1.0, 8 / 3])


def test_constant_series_falls_back_to_first_max():
    ell, fb = pick_index(np.full(10, 0.05), 12)
    assert (ell, fb) == (3, True)


def test_plateau_then_drop_hand_trace():
    # v_1 = v_2 = 0 and v_3 < v_4 < v_5: no index qualifies -> first max in [3, 6]
    ell, fb = pick_index([0.9, 0.9, 0.9, 0.2, 0.2, 0.2], 8)
    assert (ell, fb) == (3, True)


def test_rising_then_flat_hand_trace():
    # v = (.0025, .046667, .0542, .052576, ...): first ell with v_{l-2} > v_{l-1} is 5
    ell, fb = pick_index([0.0, 0.1, 0.5, 0.52, 0.52, 0.52], 8)
    assert (ell, fb) == (5, False)


def test_unsmoothed_switch_uses_raw_series(rng):
    X, Y = rng.standard_normal((60, 300)), rng.standard_normal((60, 300))
    cfg = TestConfig(k_splits=40)
    sp, cl = usable_split_spectra(X, Y, 25, cfg)
    a = theta_search(sp, cfg, classification=cl)
    b = theta_search(sp, cfg, classification=cl, smoothed=False)
    assert a.dr == b.dr
    assert a.index == pick_index(a.dr_smooth, 12)[0]
    assert b.index == pick_index(b.dr, 12)[0]


def test_select_theta_null_well_defined(rng):
    X, Y = rng.standard_normal((60, 300)), rng.standard_normal((60, 300))
    theta = select_theta(X, Y, TestConfig(k_splits=40))
    assert theta in default_theta_grid().values


def test_upper_quantile():
    xs = np.arange(1000)[::-1] / 1000.0
    assert upper_quantile(xs, 0.05) == 949 / 1000.0  # the 950th order statistic
    assert upper_quantile([0.3] * 50, 0.05) == 0.3
    assert upper_quantile(xs, 0.10) <= upper_quantile(xs, 0.05)


def test_calibration_deterministic_and_roundtrip():
    a = calibrate_delta(30, 30, 10, 80, 10, 0.05, 8, 1.0, seed=5)
    b = calibrate_delta(30, 30, 10, 80, 10, 0.05, 8, 1.0, seed=5)
    assert a == b
    assert a.delta == upper_quantile(a.dr_samples, 0.05)
    assert CalibrationResult.from_dict(a.to_dict()) == a
    assert calibrate_delta(30, 30, 10, 80, 10, 0.05, 8, 1.0, seed=5, threads=3) == a
    with pytest.raises(ConfigError):
        calibrate_delta(30, 30, 10, 80, 10, 0.05, 0, 1.0, seed=5)


@pytest.mark.slow
def test_calibrated_delta_universality(desk_delta):
    """Gaussian-identity calibration keeps the size of a Toeplitz-covariance null."""
    from uhdtest.simharness import desk_config, desk_scenario, empirical_size_power

    res = empirical_size_power(desk_scenario("I", "null", seed=77), 200, desk_config(calibrated_delta=desk_delta))
    assert 0.022 <= res.rejection_rate <= 0.085
