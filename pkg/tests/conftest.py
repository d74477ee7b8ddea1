import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


@pytest.fixture(scope="session")
def desk_delta():
    """Calibrated desk-scale threshold (B = 200), shared by the slow tests."""
    from uhdtest.simharness import DESK_THETA
    from uhdtest.tuning import calibrate_delta

    return calibrate_delta(80, 80, 35, 500, 100, 0.05, 200, DESK_THETA, seed=2026).delta
