import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parityaudit.data import ClusteredDataset
from parityaudit.estimator import (ClusterSummary, ClusteredNadarayaWatson, cluster_summaries,
                                   estimate_curve, nw_aggregate, nw_multivariate,
                                   nw_multivariate_batch, nw_user_level, nw_variance,
                                   product_kernel_weights)
from parityaudit.exceptions import DataError, InsufficientClustersError, NoMassError

from conftest import brute_nw, random_clustered


def _two_member():
    return ClusteredDataset.from_arrays(["m1", "m1", "m2"], ["g"] * 3, [0.4, 0.6, 0.5],
                                        [0, 1, 1])


def test_hand_computed_two_member_example():
    est = nw_user_level(_two_member(), "g", 0.5, 0.1)
    assert est.value == pytest.approx(0.81125, abs=5e-5)
    assert est.value == pytest.approx(brute_nw(_two_member(), "g", 0.5, 0.1), abs=1e-15)


def test_single_instance():
    ds = ClusteredDataset.from_arrays(["a"], ["g"], [0.3], [1])
    assert nw_user_level(ds, "g", 0.7, 0.2).value == 1.0


@given(st.floats(0, 1), st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_constant_outcome_is_reproduced(c, seed):
    rng = np.random.default_rng(seed)
    ds = random_clustered(rng, M=15)
    ds = ClusteredDataset(ds.member_ids, ds.groups, ds.sizes, ds.scores,
                          np.full_like(ds.outcomes, c))
    for mode in ("user", "aggregate"):
        v = estimate_curve(ds, "a", [0.2, 0.5, 0.9], mode=mode, bandwidth=0.2).values
        np.testing.assert_allclose(v, c, atol=1e-12)


def test_heavy_member_splits_modes():
    ids = ["heavy"] * 10 + [f"l{i}" for i in range(10)]
    y = [1] * 10 + [0] * 10
    ds = ClusteredDataset.from_arrays(ids, ["g"] * 20, [0.5] * 20, y)
    assert nw_aggregate(ds, "g", 0.5, 0.1).value == pytest.approx(0.5, abs=1e-15)
    assert nw_user_level(ds, "g", 0.5, 0.1).value == pytest.approx(1 / 11, abs=1e-15)


def test_modes_agree_with_singleton_members(rng):
    ds = random_clustered(rng, M=30, max_n=1)
    u = estimate_curve(ds, "a", [0.3, 0.6], mode="user", bandwidth=0.1)
    a = estimate_curve(ds, "a", [0.3, 0.6], mode="aggregate", bandwidth=0.1)
    np.testing.assert_array_equal(u.values, a.values)
    np.testing.assert_array_equal(u.std_errors, a.std_errors)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20), st.integers(1, 5), st.integers(0, 10**6),
       st.sampled_from(["user", "aggregate"]))
def test_matches_double_loop(M, max_n, seed, mode):
    rng = np.random.default_rng(seed)
    ds = random_clustered(rng, M=M, max_n=max_n, groups=("a",))
    s, h = rng.random(), rng.uniform(0.05, 0.5)
    v = estimate_curve(ds, "a", [s], mode=mode, bandwidth=h).values[0]
    assert v == pytest.approx(brute_nw(ds, "a", s, h, mode), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 10))
def test_outcome_scaling_is_linear(seed, c):
    ds = random_clustered(np.random.default_rng(seed), M=12)
    scaled = ClusteredDataset(ds.member_ids, ds.groups, ds.sizes, ds.scores, c * ds.outcomes)
    e1 = estimate_curve(ds, "a", [0.5], bandwidth=0.2)
    e2 = estimate_curve(scaled, "a", [0.5], bandwidth=0.2)
    assert e2.values[0] == pytest.approx(c * e1.values[0], rel=1e-12)
    assert e2.std_errors[0] == pytest.approx(c * e1.std_errors[0], rel=1e-9, abs=1e-15)


def test_out_of_range_evaluation_has_no_mass():
    ds = ClusteredDataset.from_arrays(["a"], ["g"], [0.0], [1], bounded=False)
    with pytest.raises(NoMassError):
        estimate_curve(ds, "g", [1e6], bandwidth=1e-3)
    c = estimate_curve(ds, "g", [1e6], bandwidth=1e-3, allow_missing=True)
    assert np.isnan(c.values[0])


def test_missing_group():
    with pytest.raises(DataError):
        nw_user_level(_two_member(), "nope", 0.5, 0.1)


def test_variance_examples():
    assert nw_variance([ClusterSummary(1, 1), ClusterSummary(0, 1)]) == pytest.approx(0.125)
    assert nw_variance([(0.3, 0.7)] * 5) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(InsufficientClustersError):
        nw_variance([(1, 1)])


def test_curve_variance_matches_summary_formula(rng):
    ds = random_clustered(rng, M=25, groups=("a",))
    A, B = cluster_summaries(ds, "a", [0.4], 0.15)
    c = estimate_curve(ds, "a", [0.4], bandwidth=0.15)
    v = nw_variance(np.column_stack([A[0], B[0]]))
    assert c.std_errors[0] ** 2 == pytest.approx(v, rel=1e-10)


def test_low_mass_inflates_error():
    ds = ClusteredDataset.from_arrays(list("abcd"), ["g"] * 4, [0.1, 0.2, 0.3, 0.4],
                                      [0, 1, 0, 1])
    A, B = cluster_summaries(ds, "g", [0.25], 0.3)
    raw = np.sqrt(nw_variance(np.column_stack([A[0], B[0]])))
    c = estimate_curve(ds, "g", [0.25], bandwidth=0.3)
    assert c.low_mass[0]
    assert c.std_errors[0] == pytest.approx(raw * np.sqrt(10 / c.m_effective[0]))


def test_multivariate_k1_matches_univariate(rng):
    ds = random_clustered(rng, M=20)
    uni = nw_user_level(ds, "a", 0.45, 0.12)
    multi = nw_multivariate(ds, "a", [0.45], [0.12])
    assert multi.value == pytest.approx(uni.value, abs=1e-14)
    assert multi.std_error == pytest.approx(uni.std_error, abs=1e-14)


def test_multivariate_three_members_brute_force():
    rng = np.random.default_rng(7)
    sizes = [2, 1, 3]
    S = rng.random((6, 2))
    Y = rng.random((6, 2))
    ds = ClusteredDataset(["x", "y", "z"], ["g"] * 3, sizes, S, Y)
    s, h = np.array([0.4, 0.6]), np.array([0.2, 0.3])
    num = den = 0.0
    row = 0
    for n in sizes:
        a = b = 0.0
        for _ in range(n):
            u = (S[row] - s) / h
            w = np.prod(np.exp(-0.5 * u ** 2) / np.sqrt(2 * np.pi))
            a += w * Y[row, 1]
            b += w
            row += 1
        num += a / n
        den += b / n
    assert nw_multivariate(ds, "g", s, h, k=1).value == pytest.approx(num / den, abs=1e-14)


@pytest.mark.parametrize("K", [1, 2, 3])
def test_gaussian_fast_path_matches_product_kernel(K):
    rng = np.random.default_rng(K)
    S, Y = rng.random((300, K)), rng.random((300, 2))
    w = rng.uniform(0.2, 1.0, 300)
    Q = rng.random((40, K))
    H = rng.uniform(0.05, 0.3, (40, K))
    vals, den = nw_multivariate_batch(S, Y, w, Q, H)
    W = product_kernel_weights(S, Q, H)
    np.testing.assert_allclose(den, W @ w, rtol=1e-11, atol=1e-300)
    np.testing.assert_allclose(vals, (W @ (Y * w[:, None])) / (W @ w)[:, None], rtol=1e-11)


def test_sklearn_wrapper():
    nw = ClusteredNadarayaWatson(bandwidth=0.1).fit([0.4, 0.6, 0.5], [0, 1, 1],
                                                    members=["a", "a", "b"])
    assert nw.predict([0.5])[0] == pytest.approx(0.81125, abs=5e-5)
    assert np.isfinite(ClusteredNadarayaWatson().fit([0.1, 0.9], [0, 1]).predict([0.5])[0])
