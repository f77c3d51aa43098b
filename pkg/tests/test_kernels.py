import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from parityaudit.exceptions import DataError
from parityaudit.kernels import (epanechnikov, gaussian, get_kernel, kernel_eval,
                                 rule_of_thumb_bandwidth)


def test_gaussian_at_zero():
    assert kernel_eval("gaussian", 0.0) == pytest.approx(0.3989422804, abs=1e-10)


def test_epanechnikov_outside_support():
    assert kernel_eval("epanechnikov", 2.0) == 0.0
    assert kernel_eval("epanechnikov", 0.0) == 0.75


@pytest.mark.parametrize("name", ["gaussian", "epanechnikov"])
def test_kernels_integrate_to_one(name):
    k = get_kernel(name)
    total, _ = integrate.quad(lambda u: float(k(u)), -10, 10, points=[-1, 1])
    assert total == pytest.approx(1.0, abs=1e-8)


@given(st.floats(-50, 50))
def test_kernels_symmetric_and_nonnegative(u):
    for k in (gaussian, epanechnikov):
        assert k(u) == k(-u)
        assert k(u) >= 0


def test_unknown_kernel():
    with pytest.raises(ValueError):
        get_kernel("triangle")


def test_bandwidth_examples():
    assert rule_of_thumb_bandwidth(0.5, 100000) == pytest.approx(0.053, abs=1e-12)
    assert rule_of_thumb_bandwidth(0.5, 32) == pytest.approx(0.265, abs=1e-12)
    assert rule_of_thumb_bandwidth(0.0, 500) == pytest.approx(500 ** -0.2 / 10)
    assert rule_of_thumb_bandwidth(1.0, 500) == pytest.approx(500 ** -0.2 / 10)


def test_bandwidth_rejects_out_of_range_when_bounded():
    with pytest.raises(DataError):
        rule_of_thumb_bandwidth(1.2, 100)
    assert rule_of_thumb_bandwidth(1.2, 32, bounded=False) == pytest.approx(0.05)


@given(st.floats(0, 1), st.integers(1, 10**6), st.integers(1, 10**6))
def test_bandwidth_positive_and_monotone_in_n(s, n1, n2):
    lo, hi = sorted((n1, n2))
    h_lo, h_hi = rule_of_thumb_bandwidth(s, lo), rule_of_thumb_bandwidth(s, hi)
    assert h_hi > 0
    assert h_hi <= h_lo


def test_bandwidth_vectorised():
    h = rule_of_thumb_bandwidth(np.array([0.0, 0.5]), 32)
    np.testing.assert_allclose(h, [0.05, 0.265])
