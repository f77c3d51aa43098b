"""Acceptance gate: one test per criterion, each reporting a pass/fail line."""
import math
import time

import numpy as np
import pytest
from scipy import special, stats

from parityaudit.calibration import BinningCalibrator, fit_multi_objective, pava
from parityaudit.data import ClusteredDataset, bootstrap_resample
from parityaudit.datasets import scored_adult, scored_heart
from parityaudit.estimator import estimate_curve
from parityaudit.harness import ExperimentConfig, run_experiment
from parityaudit.marginal import solve_fair_thresholds
from parityaudit.metrics import auc_score, ece_score, npce
from parityaudit.parity import build_score_grid, marginal_outcome_test, parity_test
from parityaudit.synth import SynthConfig, generate, generate_multi_objective

from conftest import brute_isotonic, brute_nw, random_clustered, record

ALPHA = 0.05


@pytest.fixture(scope="module")
def null_runs():
    """500 calibrated-null replicates: family-wise rejections and interval hits."""
    rejections, hits = [], []
    start = time.time()
    for r in range(500):
        ds, truth = generate(SynthConfig.two_groups(M=2000, activity=3.0, tau=0.5, seed=r))
        grid = build_score_grid(ds)
        rejections.append(parity_test(ds, "g1", "g2", grid, alpha=ALPHA).reject)
        pts = build_score_grid(ds, percentiles=(25, 50, 75)).points
        for g in ("g1", "g2"):
            lo, hi = estimate_curve(ds, g, pts).interval(0.95)
            f = truth.f(g, pts)
            hits.extend((lo <= f) & (f <= hi))
    return np.array(rejections), np.array(hits), time.time() - start


def test_criterion_01_size(null_runs):
    rej, _, secs = null_runs
    bound = 0.05 + 2 * math.sqrt(0.05 * 0.95 / 500)
    rate = rej.mean()
    ok = rate <= bound and secs < 300
    assert record(1, ok, f"null rejection rate {rate:.3f} <= {bound:.3f} "
                         f"(500 reps, {secs:.0f}s incl. coverage)")


def test_criterion_02_power():
    rej = [parity_test(ds, "g1", "g2", build_score_grid(ds)).reject
           for ds, _ in (generate(SynthConfig.two_groups(M=2000, tau=0.5, shift2=0.1,
                                                         seed=10_000 + r))
                         for r in range(200))]
    rate = float(np.mean(rej))
    assert record(2, rate >= 0.90, f"rejection rate {rate:.3f} >= 0.90 under a 0.1 shift "
                                   "(200 reps)")


def test_criterion_03_coverage(null_runs):
    _, hits, _ = null_runs
    cov = hits.mean()
    assert record(3, 0.92 <= cov <= 0.98, f"coverage {cov:.3f} in [0.92, 0.98] "
                                           f"({len(hits)} intervals)")


def test_criterion_04_variance_vs_bootstrap():
    ds, _ = generate(SynthConfig.two_groups(M=2000, tau=0.5, seed=77))
    pts = build_score_grid(ds, percentiles=(25, 50, 75)).points
    base = estimate_curve(ds, "g1", pts)
    h = base.bandwidths
    boots = np.array([estimate_curve(bootstrap_resample(ds, seed=s), "g1", pts,
                                     bandwidth=h).values
                      for s in np.random.SeedSequence(4).spawn(500)])
    ratio = base.std_errors ** 2 / boots.var(axis=0, ddof=1)
    ok = bool(np.all((ratio >= 0.8) & (ratio <= 1.25)))
    assert record(4, ok, "plug-in / bootstrap variance "
                         + ", ".join(f"{r:.3f}" for r in ratio) + " in [0.8, 1.25] (B=500)")


def test_criterion_05_user_vs_aggregate():
    both = 0
    for r in range(100):
        ds, _ = generate(SynthConfig.coupling(M=2000, seed=r))
        grid = build_score_grid(ds)
        agg = parity_test(ds, "g1", "g2", grid, mode="aggregate").reject
        user = parity_test(ds, "g1", "g2", grid, mode="user").reject
        both += agg and not user
    rate = both / 100
    assert record(5, rate >= 0.80, f"aggregate rejects and user-level does not in "
                                   f"{rate:.2f} of 100 reps (>= 0.80)")


def test_criterion_06_pava_oracle():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 13))
        y = rng.normal(size=n)
        w = rng.uniform(0.1, 2.0, n)
        _, fit = pava(np.arange(n), y, w)
        worst = max(worst, float(np.max(np.abs(fit - brute_isotonic(y, w)))))
    assert record(6, worst <= 1e-9, f"max deviation from exhaustive fit {worst:.2e} <= 1e-9 "
                                    "(200 instances)")


def test_criterion_07_nw_oracle():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        ds = random_clustered(rng, M=int(rng.integers(2, 21)), max_n=5)
        s, h = rng.random(), rng.uniform(0.05, 0.5)
        for mode in ("user", "aggregate"):
            for g in ds.group_levels:
                v = estimate_curve(ds, g, [s], mode=mode, bandwidth=h).values[0]
                worst = max(worst, abs(v - brute_nw(ds, g, s, h, mode)))
    assert record(7, worst <= 1e-12, f"max deviation from double loop {worst:.2e} <= 1e-12 "
                                     "(200 datasets, both modes)")


def _uci(ds):
    cfg = ExperimentConfig(methods=("linear_interp",), B=200, seed=0)
    table = run_experiment(cfg, ds).table
    return table["none"], table["linear_interp"]


def test_criterion_08a_heart():
    base, li = _uci(scored_heart()[0])
    npce_cut = 1 - li["npce"].mean / base["npce"].mean
    pe_down = li["parity_error"].mean < base["parity_error"].mean
    sig = li["npce"].significant and li["parity_error"].significant
    ok = npce_cut >= 0.40 and pe_down and sig
    assert record("8a", ok, f"Heart NPCE {base['npce'].mean:.4f} -> {li['npce'].mean:.4f} "
                            f"({100 * npce_cut:.0f}% cut, need >= 40%), parity error "
                            f"{base['parity_error'].mean:.4f} -> "
                            f"{li['parity_error'].mean:.4f}, significant: {sig}")


def test_criterion_08b_adult():
    base, li = _uci(scored_adult()[0])
    npce_cut = 1 - li["npce"].mean / base["npce"].mean
    assert record("8b", npce_cut >= 0.30, f"Adult NPCE {base['npce'].mean:.4f} -> "
                                          f"{li['npce'].mean:.4f} ({100 * npce_cut:.0f}% cut, "
                                          "need >= 30%)")


def test_criterion_09_multi_objective():
    weights = [(1.0, 0.0), (0.5, 0.5), (0.3, 0.7)]
    rejections = {w: 0 for w in weights}
    worst_npce = {w: 0.0 for w in weights}
    wins = 0
    for r in range(100):
        ds = generate_multi_objective(M=5000, seed=r)
        out = fit_multi_objective(ds).transform_dataset(ds)
        raw = np.mean((ds.scores[:, 1] - ds.outcomes[:, 1]) ** 2)
        new = np.mean((out.scores[:, 1] - out.outcomes[:, 1]) ** 2)
        wins += new < raw
        for w in weights:
            comp = out.composite(np.array(w))
            grid = build_score_grid(comp)
            rejections[w] += parity_test(comp, "g1", "g2", grid, alpha=ALPHA).reject
            worst_npce[w] = max(worst_npce[w], npce(comp, grid))
    rates = {w: rejections[w] / 100 for w in weights}
    ok = (all(v <= ALPHA for v in rates.values())
          and all(v <= 0.03 for v in worst_npce.values()) and wins >= 95)
    assert record(9, ok, "composite rejection rates "
                  + ", ".join(f"{w}: {rates[w]:.2f}" for w in weights)
                  + " (<= 0.05); max composite NPCE "
                  + ", ".join(f"{worst_npce[w]:.4f}" for w in weights)
                  + f" (<= 0.03); S2 MSE improved in {wins}/100 (>= 95)")


def test_criterion_10_marginal_solver():
    uniform = lambda t: np.clip(t, 0.0, 1.0)  # noqa: E731
    sol = solve_fair_thresholds(lambda t: t, lambda t: t + 0.1, uniform, uniform,
                                0.5, 0.5, 0.5)
    t1, t2 = sol.thresholds["g1"], sol.thresholds["g2"]
    closed = abs(t1 - 0.55) <= 1e-3 and abs(t2 - 0.45) <= 1e-3
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(200):
        a, b = rng.uniform(0.15, 0.85, 2)
        p1 = rng.uniform(0.1, 0.9)
        s1, s2 = rng.uniform(0.2, 3.0, 2)
        c1 = rng.uniform(-0.3, 0.3)
        c2 = c1 + s1 * a - s2 * b
        beta = rng.uniform(0.5, 2.0, 2)
        cdf1 = lambda t, k=beta[0]: stats.beta.cdf(t, k, 1.0)  # noqa: E731
        cdf2 = lambda t, k=beta[1]: stats.beta.cdf(t, 1.0, k)  # noqa: E731
        # choose t* so that (a, b) meets the budget: a solution exists
        target = p1 * (1 - cdf1(a)) + (1 - p1) * (1 - cdf2(b))
        t_star = _solve_status_quo(cdf1, cdf2, p1, target)
        s = solve_fair_thresholds(lambda t, c=c1, k=s1: c + k * t,
                                  lambda t, c=c2, k=s2: c + k * t,
                                  cdf1, cdf2, p1, 1 - p1, t_star)
        worst = max(worst, abs(s.budget_residual), s.fairness_residual)
    ok = closed and worst <= 1e-4
    assert record(10, ok, f"closed form ({t1:.5f}, {t2:.5f}) vs (0.55, 0.45) within 1e-3; "
                          f"max residual {worst:.2e} <= 1e-4 on 200 random instances")


def _solve_status_quo(cdf1, cdf2, p1, target):
    lo, hi = 0.0, 1.0
    for _ in range(200):
        m = 0.5 * (lo + hi)
        if p1 * (1 - cdf1(m)) + (1 - p1) * (1 - cdf2(m)) > target:
            lo = m
        else:
            hi = m
    return 0.5 * (lo + hi)


def test_criterion_11_marginal_test():
    size = np.mean([marginal_outcome_test(
        generate(SynthConfig.two_groups(M=3000, tau=0.5, seed=20_000 + r))[0],
        "g1", "g2", 0.5).reject for r in range(500)])
    power = np.mean([marginal_outcome_test(
        generate(SynthConfig.two_groups(M=3000, tau=0.5, shift2=0.15, seed=30_000 + r))[0],
        "g1", "g2", 0.5).reject for r in range(200)])
    ok = size <= 0.07 and power >= 0.9
    assert record(11, ok, f"truncated-null size {size:.3f} <= 0.07 (500 reps); power "
                          f"{power:.3f} >= 0.9 under a 0.15 shift (200 reps)")


def test_criterion_12_auc_invariance_and_single_bin_ece():
    rng = np.random.default_rng(12)
    exact = True
    for _ in range(100):
        n = int(rng.integers(10, 200))
        s = np.round(rng.random(n), int(rng.integers(1, 4)))
        y = (rng.random(n) < s).astype(float)
        y[:2] = (0, 1)
        base = auc_score(s, y)
        for f in (np.sqrt, lambda x: 3 * x + 1, lambda x: special.logit(0.01 + 0.98 * x)):
            exact &= auc_score(f(s), y) == base
    worst = 0.0
    for _ in range(100):
        s = rng.random(500)
        y = (rng.random(500) < s).astype(float)
        cal = BinningCalibrator(n_bins=1).fit(s, y)
        worst = max(worst, ece_score(cal.transform(s), y))
    ok = exact and worst <= 1e-12
    assert record(12, ok, f"AUC identical under monotone maps on 100 datasets: {exact}; "
                          f"single-bin ECE {worst:.1e} <= 1e-12")
