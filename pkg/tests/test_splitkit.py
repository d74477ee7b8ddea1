import numpy as np
import pytest

from uhdtest.errors import DimensionError, EmptySpectrumError, SizeError
from uhdtest.procedure import compute_split_spectra
from uhdtest.splitkit import (
    SplitTag,
    classify_batch,
    classify_split,
    default_split_size,
    max_split_size,
    split_once,
    split_rng,
)


def test_size_bound_examples(rng):
    X, Y = rng.standard_normal((100, 4)), rng.standard_normal((100, 4))
    t = split_once(X, Y, 45, split_rng(1, 0))
    assert t.z_source == "x" and len(t.z_indices) == 45
    assert not set(t.z_indices) & set(t.x_indices)
    with pytest.raises(SizeError):
        split_once(X, Y, 50, split_rng(1, 0))
    assert max_split_size(100, 800) == 100
    t = split_once(X, rng.standard_normal((800, 4)), 99, split_rng(1, 0))
    assert t.z_source == "y"
    assert not set(t.z_indices) & set(t.y_indices)


def test_default_split_size():
    assert default_split_size(80, 80) == 35
    assert default_split_size(100, 800) == 95
    with pytest.raises(SizeError):
        default_split_size(5, 5)


def test_dimension_mismatch(rng):
    with pytest.raises(DimensionError):
        split_once(rng.standard_normal((20, 3)), rng.standard_normal((20, 4)), 5, split_rng(0, 0))


def test_indices_distinct_and_in_range(rng):
    X, Y = rng.standard_normal((30, 2)), rng.standard_normal((25, 2))
    for i in range(50):
        t = split_once(X, Y, 10, split_rng(9, i))
        for idx, bound in ((t.x_indices, 30), (t.y_indices, 25), (t.z_indices, 30)):
            assert len(set(idx)) == 10 and idx.min() >= 0 and idx.max() < bound
        assert not set(t.z_indices) & set(t.x_indices)


def test_split_determinism():
    a = split_once(np.zeros((40, 2)), np.zeros((40, 2)), 15, split_rng(5, 3))
    b = split_once(np.zeros((40, 2)), np.zeros((40, 2)), 15, split_rng(5, 3))
    np.testing.assert_array_equal(a.x_indices, b.x_indices)
    np.testing.assert_array_equal(a.z_indices, b.z_indices)


def test_classification_examples():
    s = [5.0, 4.0, 3.0]
    c = classify_split(s, s, s)
    assert c.tag is SplitTag.EFFICIENT and c.gamma == 4.0
    assert classify_split([10.0, 9.0], [2.0, 1.0], [0.0, 50.0]).tag is SplitTag.AUTO_REJECT
    assert classify_split(s, s, [9.0, 8.0, 7.0]).tag is SplitTag.DISCARDED
    with pytest.raises(EmptySpectrumError):
        classify_split([], s, s)


def test_auto_reject_takes_precedence():
    # z median inside x but far spectra: still auto-reject
    assert classify_split([10.0, 9.0, 8.0], [2.0, 1.0, 0.5], [9.5, 9.0, 8.5]).tag is SplitTag.AUTO_REJECT


def test_null_split_fractions(rng):
    X, Y = rng.standard_normal((80, 500)), rng.standard_normal((80, 500))
    sp = compute_split_spectra(X, Y, 35, 200, seed=4)
    tags, _ = classify_batch(sp.x, sp.y, sp.z)
    assert np.mean(tags == SplitTag.DISCARDED) < 0.05
    assert np.mean(tags == SplitTag.AUTO_REJECT) < 0.05
