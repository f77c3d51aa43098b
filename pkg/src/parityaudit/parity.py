"""Grid-based tests of predictive rate parity and marginal outcome fairness."""
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import stats

from .estimator import Curve, _check_mode, estimate_curve
from .exceptions import DataError, EstimationError

DEFAULT_PERCENTILES = (1,) + tuple(range(5, 100, 5)) + (99,)
CORRECTIONS = ("bonferroni", "holm", "none")
ALTERNATIVES = ("two-sided", "greater", "less")


@dataclass(frozen=True)
class ScoreGrid:
    points: np.ndarray
    source_percentiles: tuple = ()

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or len(pts) == 0:
            raise DataError("a score grid needs at least one point")
        if np.any(np.diff(pts) <= 0):
            raise DataError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def build_score_grid(reference, percentiles=DEFAULT_PERCENTILES, k=0):
    """Empirical percentiles of the pooled instance scores, duplicates removed.

    ``reference`` is a ``ClusteredDataset`` or a plain array of scores.
    """
    scores = reference.scores[:, k] if hasattr(reference, "scores") else np.ravel(reference)
    if len(scores) == 0:
        raise DataError("cannot build a grid from an empty reference")
    pct = np.asarray(percentiles, dtype=float)
    if np.any((pct <= 0) | (pct >= 100)):
        raise DataError("percentiles must lie strictly between 0 and 100")
    points = np.unique(np.percentile(scores, pct))
    return ScoreGrid(points, tuple(float(p) for p in pct))


def adjust_pvalues(p, method="bonferroni"):
    """Family-wise adjusted p-values; NaN entries are left out of the family."""
    p = np.asarray(p, dtype=float)
    out = np.full_like(p, np.nan)
    ok = np.isfinite(p)
    J = int(ok.sum())
    if J == 0:
        return out
    q = p[ok]
    if method == "bonferroni":
        adj = np.minimum(q * J, 1.0)
    elif method == "holm":
        order = np.argsort(q, kind="stable")
        stepped = np.minimum((J - np.arange(J)) * q[order], 1.0)
        adj = np.empty(J)
        adj[order] = np.maximum.accumulate(stepped)
    elif method == "none":
        adj = q.copy()
    else:
        raise ValueError(f"correction must be one of {CORRECTIONS}")
    out[ok] = adj
    return out


def _z_and_p(v1, se1, v2, se2, alternative):
    diff = v1 - v2
    se = np.sqrt(se1 ** 2 + se2 ** 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0),
                     np.where(diff == 0, 0.0, np.sign(diff) * np.inf))
    if alternative == "two-sided":
        p = 2 * stats.norm.sf(np.abs(z))
    elif alternative == "greater":
        p = stats.norm.sf(z)
    elif alternative == "less":
        p = stats.norm.cdf(z)
    else:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    return z, np.clip(p, 0.0, 1.0)


def _clean(x):
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (float, np.floating)):
        return None if not math.isfinite(float(x)) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class ParityTestReport:
    grid: np.ndarray
    groups: tuple
    estimates: tuple
    std_errors: tuple
    z: np.ndarray
    p_raw: np.ndarray
    p_adj: np.ndarray
    alpha: float
    correction: str
    mode: str
    alternative: str = "two-sided"
    bandwidths: tuple = ()
    ordering_violations: list = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def testable(self):
        return np.isfinite(self.p_raw)

    @property
    def untestable_points(self):
        return self.grid[~self.testable]

    @property
    def reject(self):
        return bool(np.nanmin(self.p_adj) < self.alpha) if np.any(self.testable) else False

    @property
    def min_p_adj(self):
        return float(np.nanmin(self.p_adj)) if np.any(self.testable) else float("nan")

    def to_dict(self):
        g1, g2 = self.groups
        return _clean({
            "groups": list(self.groups),
            "mode": self.mode,
            "alpha": self.alpha,
            "correction": self.correction,
            "alternative": self.alternative,
            "reject": self.reject,
            "grid": self.grid,
            "estimates": {g1: self.estimates[0], g2: self.estimates[1]},
            "std_errors": {g1: self.std_errors[0], g2: self.std_errors[1]},
            "bandwidths": {g1: self.bandwidths[0], g2: self.bandwidths[1]}
            if self.bandwidths else {},
            "z": self.z,
            "p_raw": self.p_raw,
            "p_adj": self.p_adj,
            "untestable": self.untestable_points,
            "ordering_violations": self.ordering_violations,
            "ordering_note": "heuristic diagnostic without formal size control",
            "warnings": self.warnings,
        })


def _compare(c1, c2, alpha, correction, alternative, mode, groups):
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    z, p = _z_and_p(c1.values, c1.std_errors, c2.values, c2.std_errors, alternative)
    bad = ~(c1.estimable & c2.estimable)
    z = np.where(bad, np.nan, z)
    p = np.where(bad, np.nan, p)
    notes = []
    if np.any(bad):
        notes.append(f"{int(bad.sum())} grid point(s) untestable (no kernel mass in a "
                     "group); excluded from the correction")
    for c in (c1, c2):
        if np.any(c.low_mass & c.estimable):
            notes.append(f"group {c.group!r}: fewer than 10 effective members at "
                         f"{int((c.low_mass & c.estimable).sum())} point(s); "
                         "standard errors inflated")
    return ParityTestReport(
        grid=c1.grid, groups=groups, estimates=(c1.values, c2.values),
        std_errors=(c1.std_errors, c2.std_errors), z=z, p_raw=p,
        p_adj=adjust_pvalues(p, correction), alpha=alpha, correction=correction,
        mode=mode, alternative=alternative, bandwidths=(c1.bandwidths, c2.bandwidths),
        warnings=notes)


def parity_test(dataset, g1, g2, grid, alpha=0.05, mode="user", k=0, bandwidth="auto",
                kernel="gaussian", correction="bonferroni", alternative="two-sided",
                diagnose_ordering=True):
    """Pointwise z-tests of equal conditional outcome curves across two groups.

    Each group's curve uses its own rule-of-thumb bandwidth unless a fixed
    ``bandwidth`` is given. Grid points where either group has no kernel mass
    are reported as untestable and shrink the correction factor.
    """
    mode = _check_mode(mode)
    for g in (g1, g2):
        if g not in dataset.group_levels:
            raise DataError(f"group {g!r} not present")
    c1 = estimate_curve(dataset, g1, grid, mode=mode, k=k, bandwidth=bandwidth,
                        kernel=kernel, allow_missing=True)
    c2 = estimate_curve(dataset, g2, grid, mode=mode, k=k, bandwidth=bandwidth,
                        kernel=kernel, allow_missing=True)
    report = _compare(c1, c2, alpha, correction, alternative, mode, (g1, g2))
    if diagnose_ordering:
        report.ordering_violations = ordering_diagnostic({g1: c1, g2: c2})
    return report


def marginal_outcome_test(dataset, g1, g2, t_star, h="auto", alpha=0.05, mode="user",
                          k=0, kernel="gaussian", alternative="two-sided"):
    """Test equal expected outcomes at a classification threshold.

    Only instances with score >= ``t_star`` enter the kernel sums (labels
    below the threshold are treated as unobserved); member sizes still count
    every instance. The evaluation point is ``t_star`` clipped up to the
    smallest observed score.
    """
    mode = _check_mode(mode)
    for g in (g1, g2):
        if g not in dataset.group_levels:
            raise DataError(f"group {g!r} not present")
        above = dataset.scores[dataset.instance_groups == g, k] >= t_star
        if not np.any(above):
            raise EstimationError(f"group {g!r} has no instances at or above {t_star}")
    point = max(float(t_star), float(dataset.scores[:, k].min()))
    lower = None if not np.isfinite(t_star) else float(t_star)
    c1 = estimate_curve(dataset, g1, [point], mode=mode, k=k, bandwidth=h, kernel=kernel,
                        lower=lower, allow_missing=True)
    c2 = estimate_curve(dataset, g2, [point], mode=mode, k=k, bandwidth=h, kernel=kernel,
                        lower=lower, allow_missing=True)
    return _compare(c1, c2, alpha, "bonferroni", alternative, mode, (g1, g2))


def ordering_diagnostic(curves, tolerance=2.0):
    """Cross-group score inversions on a shared grid.

    Flags every ``s < s'`` and ``g != g'`` where the estimate for ``g`` at
    ``s`` exceeds the estimate for ``g'`` at ``s'`` by more than
    ``tolerance * (se_g(s) + se_g'(s'))``. Heuristic: no size control.
    """
    names = list(curves)
    out = []
    grid = None
    for g in names:
        c = curves[g]
        pts = np.asarray(c.grid if isinstance(c, Curve) else c["grid"], dtype=float)
        if grid is None:
            grid = pts
        elif not np.array_equal(grid, pts):
            raise DataError("curves must share the same grid")
    J = len(grid)
    upper = np.triu(np.ones((J, J), dtype=bool), k=1)

    def arrays(c):
        if isinstance(c, Curve):
            return c.values, c.std_errors
        return (np.asarray(c["values"], dtype=float),
                np.asarray(c.get("std_errors", np.zeros(J)), dtype=float))

    for g in names:
        vg, sg = arrays(curves[g])
        for h in names:
            if h == g:
                continue
            vh, sh = arrays(curves[h])
            gap = vg[:, None] - vh[None, :]
            band = tolerance * (sg[:, None] + sh[None, :])
            with np.errstate(invalid="ignore"):
                hit = upper & (gap > band)
            for i, j in zip(*np.nonzero(hit)):
                out.append({"group": g, "s": float(grid[i]), "value": float(vg[i]),
                            "other_group": h, "s_other": float(grid[j]),
                            "other_value": float(vh[j]), "gap": float(gap[i, j])})
    return out
