import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import roc_auc_score

from parityaudit.data import ClusteredDataset
from parityaudit.exceptions import DataError, DegenerateOutcomeError
from parityaudit.metrics import (auc, auc_score, ece_score, group_curves, npce,
                                 npce_from_curves, parity_error, parity_error_from_curves)


def test_npce_formula():
    pts = np.array([0.2, 0.4])
    assert npce_from_curves(pts, {"a": [0.3, 0.4], "b": [0.2, 0.2]}) == pytest.approx(0.15)


def test_parity_error_counts_ordered_pairs():
    assert parity_error_from_curves({"a": [0.5, 0.6], "b": [0.4, 0.5]}) == pytest.approx(0.2)
    with pytest.raises(DataError):
        parity_error_from_curves({"a": [0.5]})


def test_identical_groups_have_zero_parity_error():
    rng = np.random.default_rng(0)
    s = rng.random(500)
    y = (rng.random(500) < s).astype(float)
    ds = ClusteredDataset.from_arrays(np.r_[np.arange(500), np.arange(500) + 500],
                                      ["a"] * 500 + ["b"] * 500, np.r_[s, s], np.r_[y, y])
    assert parity_error(ds, [0.25, 0.5, 0.75]) == pytest.approx(0.0, abs=1e-12)
    assert npce(ds, [0.5]) >= 0


def test_group_curves_drop_points_missing_anywhere():
    ds = ClusteredDataset.from_arrays(list("abcd"), ["x", "x", "y", "y"], [0.1, 0.2, 0.1, 0.9],
                                      [0, 1, 1, 0])
    pts, curves, dropped = group_curves(ds, [0.15, 0.9], bandwidth=0.01)
    assert list(pts) == [0.15] and list(dropped) == [0.9]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_auc_matches_sklearn_with_ties(seed):
    rng = np.random.default_rng(seed)
    s = np.round(rng.random(60), 1)
    y = np.r_[0, 1, (rng.random(58) < 0.5)].astype(float)
    assert auc_score(s, y) == pytest.approx(roc_auc_score(y, s), abs=1e-12)


def test_auc_extremes_and_errors():
    assert auc_score([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc_score([0.5] * 4, [0, 1, 0, 1]) == 0.5
    with pytest.raises(DegenerateOutcomeError):
        auc_score([0.1, 0.2], [1, 1])
    with pytest.raises(DataError):
        auc_score([0.1, 0.2], [0, 0.5])


def test_auc_by_group():
    ds = ClusteredDataset.from_arrays(list("abcd"), ["x", "x", "y", "y"], [0.1, 0.9, 0.9, 0.1],
                                      [0, 1, 0, 1])
    assert auc(ds, "x") == 1.0 and auc(ds, "y") == 0.0


def test_ece_cases():
    assert ece_score([0.05, 0.05], [0, 0.1]) == pytest.approx(0.0)
    assert ece_score([0.9, 0.9], [0, 0]) == pytest.approx(0.9)
    # two bins: |0.2 - 0| and |0.8 - 1| each with mass 1/2
    assert ece_score([0.2, 0.8], [0, 1]) == pytest.approx(0.2)
    assert ece_score([1.0], [1.0]) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        ece_score([0.5], [1], bins=0)
