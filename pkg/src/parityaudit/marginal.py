"""Group-specific thresholds that equalise marginal outcomes.

Given a common threshold ``t*`` and labels observed only above it, fit one
outcome predictor per group (NW above the threshold, a linear extension
below it) and search for thresholds ``(t1, t2)`` with equal predicted
outcomes that keep the overall positive-classification rate unchanged.
"""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .calibration import pava
from .estimator import _check_mode, estimate_curve
from .exceptions import DataError, EstimationError, NoSolutionError, NonInvertibleError
from .parity import _clean

MIN_WINDOW_INSTANCES = 30
KNOT_PERCENTILES = tuple(range(5, 101, 5))
CAUTION = ("thresholds below the common threshold rely on extrapolated outcome "
           "predictions and are only suggestive")


@dataclass(frozen=True)
class OutcomePredictor:
    """Monotone outcome curve for one group around a threshold.

    At and above ``t_star`` the curve interpolates isotonic-smoothed values
    at ``knots``: the window OLS fit at ``t_star`` itself and truncated NW
    estimates further up (held constant past the last knot). Below it the
    curve continues as the line through ``(t_star, values[0])`` with the
    window OLS slope (floored at zero; the raw fit is ``window_slope``).
    Predictions are clipped to [0, 1].
    """

    group: str
    t_star: float
    knots: np.ndarray
    values: np.ndarray
    slope: float
    intercept: float
    raw_values: np.ndarray = None
    window: float = float("nan")
    n_window: int = 0
    window_slope: float = float("nan")

    @property
    def anchor(self):
        return float(self.values[0])

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        above = np.interp(s, self.knots, self.values)
        below = self.anchor + self.slope * (s - self.t_star)
        return np.clip(np.where(s >= self.t_star, above, below), 0.0, 1.0)

    def is_monotone(self):
        return self.slope >= 0 and bool(np.all(np.diff(self.values) >= 0))

    def inverse(self, v, lo=0.0, hi=1.0, prefer=None, tol=1e-12):
        """A score in ``[lo, hi]`` whose prediction equals ``v``.

        Flat stretches make the preimage an interval; the point of it
        closest to ``prefer`` (default ``t_star``) is returned. NaN when
        ``v`` lies outside the predictor's range on ``[lo, hi]``.
        """
        prefer = self.t_star if prefer is None else prefer
        return _numeric_inverse(self)(v, lo=lo, hi=hi, prefer=prefer, tol=tol)

    def to_dict(self, grid=None):
        grid = np.linspace(0, 1, 101) if grid is None else np.asarray(grid, dtype=float)
        return _clean({"group": self.group, "t_star": self.t_star, "knots": self.knots,
                       "values": self.values, "raw_values": self.raw_values,
                       "slope": self.slope, "window_slope": self.window_slope,
                       "intercept": self.intercept,
                       "window": self.window, "n_window": self.n_window,
                       "curve": {"s": grid, "prediction": self(grid)}})


def fit_outcome_predictor(dataset, group, t_star, window=None, mode="user", k=0,
                          bandwidth="auto", kernel="gaussian", percentiles=KNOT_PERCENTILES):
    """Fit a group's :class:`OutcomePredictor` from labels at or above ``t_star``.

    ``window`` defaults to a fifth of the distance from ``t_star`` to the
    group's largest score. At least 30 instances must fall in
    ``[t_star, t_star + window]``.
    """
    mode = _check_mode(mode)
    rows = dataset.instance_groups == group
    if not np.any(rows):
        raise DataError(f"group {group!r} not present")
    s = dataset.scores[rows, k]
    y = dataset.outcomes[rows, k]
    above = s >= t_star
    if not np.any(above):
        raise EstimationError(f"group {group!r} has no scores at or above {t_star}")
    top = float(s[above].max())
    if window is None:
        window = 0.2 * (top - t_star)
    in_window = above & (s <= t_star + window)
    n_window = int(in_window.sum())
    if n_window < MIN_WINDOW_INSTANCES:
        raise EstimationError(
            f"group {group!r}: only {n_window} instances in [{t_star:g}, "
            f"{t_star + window:g}]; need {MIN_WINDOW_INSTANCES}, try a larger window")
    sw, yw = s[in_window], y[in_window]
    if np.ptp(sw) > 0:
        slope, intercept = map(float, np.polyfit(sw, yw, 1))
    else:
        slope, intercept = 0.0, float(yw.mean())
    knots = np.unique(np.r_[t_star, np.percentile(s[above], percentiles)])
    knots = knots[knots >= t_star]
    curve = estimate_curve(dataset, group, knots, mode=mode, k=k, bandwidth=bandwidth,
                           kernel=kernel, lower=t_star, allow_missing=True)
    ok = curve.estimable
    knots, raw = knots[ok], curve.values[ok]
    if len(knots) == 0 or knots[0] != t_star:
        raise EstimationError(f"group {group!r}: no kernel mass at the threshold")
    # a one-sided kernel average is biased at the threshold itself, so the
    # knot there takes the window line's value instead
    at_threshold = intercept + slope * t_star
    _, smooth = pava(knots, np.r_[at_threshold, raw[1:]])
    anchor = float(smooth[0])
    # a noisy negative slope would break invertibility below the threshold
    ext = max(slope, 0.0)
    return OutcomePredictor(str(group), float(t_star), knots, smooth, ext,
                            anchor - ext * t_star, raw, float(window), n_window, slope)


@dataclass(frozen=True)
class EmpiricalCDF:
    """Continuous, piecewise-linear version of the empirical score CDF.

    Runs through ``(lo, 0)``, the points ``(x_(i), i/n)`` at the distinct
    sorted scores, and ``(hi, 1)``.
    """

    x: np.ndarray
    F: np.ndarray

    def __call__(self, s):
        return np.interp(s, self.x, self.F)


def empirical_cdf(scores, lo=0.0, hi=1.0):
    scores = np.sort(np.asarray(scores, dtype=float))
    if len(scores) == 0:
        raise DataError("empty score sample")
    xs, counts = np.unique(scores, return_counts=True)
    F = np.cumsum(counts) / len(scores)
    lo, hi = min(lo, xs[0]), max(hi, xs[-1])
    x = np.r_[lo, xs, hi] if xs[0] > lo else np.r_[xs, hi]
    F = np.r_[0.0, F, 1.0] if xs[0] > lo else np.r_[F, 1.0]
    if x[-1] == x[-2]:
        x, F = x[:-1], F[:-1]
    return EmpiricalCDF(x, F)


@dataclass
class MarginalSolution:
    thresholds: dict
    outcomes: dict
    budget_residual: float
    fairness_residual: float
    iterations: int
    extrapolated: bool
    t_star: float
    status_quo_outcomes: dict = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def to_dict(self):
        return _clean({"t_star": self.t_star, "thresholds": self.thresholds,
                       "outcomes": self.outcomes,
                       "status_quo_outcomes": self.status_quo_outcomes,
                       "budget_residual": self.budget_residual,
                       "fairness_residual": self.fairness_residual,
                       "iterations": self.iterations, "extrapolated": self.extrapolated,
                       "notes": self.notes})


def solve_fair_thresholds(pred_g1, pred_g2, cdf_g1, cdf_g2, p_g1, p_g2, t_star,
                          bounds=(0.0, 1.0), tol=1e-4, max_iter=200):
    """Thresholds with equal predicted outcomes and an unchanged positive rate.

    Solves ``pred_g1(t1) = pred_g2(t2)`` together with the budget identity
    ``p1 (1 - F1(t1)) + p2 (1 - F2(t2)) = p1 (1 - F1(t*)) + p2 (1 - F2(t*))``.
    The search runs over the common outcome level ``v``: each level fixes a
    preimage interval per group and the budget residual falls as ``v``
    rises, so bisection on ``v`` brackets every solution. Where several
    pairs solve both equations, the one closest to ``(t*, t*)`` in max-norm
    is returned.
    """
    lo, hi = map(float, bounds)
    if not lo <= t_star <= hi:
        raise DataError("t_star must lie inside the search bounds")
    preds = (pred_g1, pred_g2)
    for pred in preds:
        name = getattr(pred, "group", "?")
        if hasattr(pred, "is_monotone") and not pred.is_monotone():
            raise NonInvertibleError(f"predictor for {name!r} is not non-decreasing")
        if float(pred(hi)) - float(pred(lo)) <= 0:
            raise NonInvertibleError(f"predictor for {name!r} is constant on the search range")
    base = p_g1 * (1 - cdf_g1(t_star)) + p_g2 * (1 - cdf_g2(t_star))

    def residual(t1, t2):
        return float(p_g1 * (1 - cdf_g1(t1)) + p_g2 * (1 - cdf_g2(t2)) - base)

    def preimage(pred, v):
        a = _first(lambda s: float(pred(s)) >= v - 1e-12, lo, hi)
        b = _last(lambda s: float(pred(s)) <= v + 1e-12, lo, hi)
        a = hi if a is None else a
        b = lo if b is None else b
        return a, max(a, b)

    def bracket(v):
        (a1, b1), (a2, b2) = preimage(pred_g1, v), preimage(pred_g2, v)
        # most and fewest positives reachable at this level
        return residual(a1, a2), residual(b1, b2), (a1, b1, a2, b2)

    v_min = max(float(pred_g1(lo)), float(pred_g2(lo)))
    v_max = min(float(pred_g1(hi)), float(pred_g2(hi)))
    if v_min > v_max:
        raise NoSolutionError("the two predictors share no outcome level on the range")
    if bracket(v_min)[0] < -tol or bracket(v_max)[1] > tol:
        raise NoSolutionError("budget residual does not change sign on the search range")

    def bisect(cond, a, b):
        # largest v in [a, b] with cond(v) true, cond monotone decreasing
        it = 0
        if cond(b):
            return b, it
        for it in range(1, max_iter + 1):
            m = 0.5 * (a + b)
            if cond(m):
                a = m
            else:
                b = m
            if b - a < 1e-13:
                break
        return a, it

    # feasible levels: bracket(v)[1] <= 0 <= bracket(v)[0]
    v_hi, it1 = bisect(lambda v: bracket(v)[0] >= 0, v_min, v_max)
    v_lo, it2 = bisect(lambda v: bracket(v)[1] > 0, v_min, v_max)
    if bracket(v_min)[1] <= 0:
        v_lo = v_min
    v_lo = min(v_lo, v_hi)
    levels = np.unique(np.r_[np.linspace(v_lo, v_hi, 41), v_lo, v_hi])
    best = None
    for v in levels:
        a1, b1, a2, b2 = bracket(v)[2]
        for t1 in np.unique(np.r_[np.linspace(a1, b1, 41), np.clip(t_star, a1, b1)]):
            t2 = _solve_t2(lambda x: residual(t1, x), a2, b2, t_star, tol)
            if t2 is None:
                continue
            key = max(abs(t1 - t_star), abs(t2 - t_star))
            if best is None or key < best[0]:
                best = (key, float(t1), float(t2))
    if best is None:
        raise NoSolutionError("no threshold pair meets both constraints; score "
                              "distributions may be too discrete")
    _, t1, t2 = best
    o1, o2 = float(pred_g1(t1)), float(pred_g2(t2))
    budget = residual(t1, t2)
    fair = abs(o1 - o2)
    if abs(budget) > tol or fair > tol:
        raise NoSolutionError(f"solver residuals exceed {tol:g} (budget {budget:.2e}, "
                              f"fairness {fair:.2e})")
    g1 = getattr(pred_g1, "group", "g1")
    g2 = getattr(pred_g2, "group", "g2")
    extrapolated = t1 < t_star or t2 < t_star
    return MarginalSolution(
        thresholds={g1: t1, g2: t2}, outcomes={g1: o1, g2: o2}, budget_residual=budget,
        fairness_residual=fair, iterations=it1 + it2, extrapolated=extrapolated,
        t_star=float(t_star),
        status_quo_outcomes={g1: float(pred_g1(t_star)), g2: float(pred_g2(t_star))},
        notes=[CAUTION] if extrapolated else [])


def _solve_t2(r, a, b, prefer, tol):
    """Zero of the non-increasing ``r`` on [a, b] nearest ``prefer``, or None."""
    ra, rb = r(a), r(b)
    if ra < -tol or rb > tol:
        return None
    p = float(np.clip(prefer, a, b))
    if abs(r(p)) <= 1e-12:
        return p
    if r(p) > 0:
        a = p
    else:
        b = p
    for _ in range(200):
        m = 0.5 * (a + b)
        if r(m) > 0:
            a = m
        else:
            b = m
        if b - a < 1e-13:
            break
    # the zero set can be an interval; take its end nearest prefer
    return b if p <= a else a


def _first(pred, lo, hi):
    """Smallest t in [lo, hi] where a monotone predicate turns true."""
    if pred(lo):
        return lo
    if not pred(hi):
        return None
    for _ in range(100):
        m = 0.5 * (lo + hi)
        if pred(m):
            hi = m
        else:
            lo = m
        if hi - lo < 1e-13:
            break
    return hi


def _last(pred, lo, hi):
    """Largest t in [lo, hi] where a predicate that turns false stays true."""
    if pred(hi):
        return hi
    if not pred(lo):
        return None
    for _ in range(100):
        m = 0.5 * (lo + hi)
        if pred(m):
            lo = m
        else:
            hi = m
        if hi - lo < 1e-13:
            break
    return lo


def _numeric_inverse(fn):
    """Generalised inverse for a plain monotone callable."""
    def inverse(v, lo=0.0, hi=1.0, prefer=0.5, tol=1e-12):
        if v < float(fn(lo)) - tol or v > float(fn(hi)) + tol:
            return float("nan")
        left = _first(lambda s: float(fn(s)) >= v - tol, lo, hi)
        right = _last(lambda s: float(fn(s)) <= v + tol, lo, hi)
        right = left if right is None or right < left else right
        return float(np.clip(prefer, left, right))
    return inverse


def mitigate_marginal(dataset, g1, g2, t_star, window=None, mode="user", k=0,
                      bandwidth="auto", kernel="gaussian"):
    """Fit both predictors and solve for fair thresholds on one dataset.

    Group proportions are instance shares, so the preserved quantity is the
    share of instances classified positive. Returns
    ``(solution, predictor_g1, predictor_g2)``.
    """
    preds = [fit_outcome_predictor(dataset, g, t_star, window, mode, k, bandwidth, kernel)
             for g in (g1, g2)]
    lo = 0.0 if dataset.bounded else float(dataset.scores[:, k].min())
    hi = 1.0 if dataset.bounded else float(dataset.scores[:, k].max())
    cdfs, props = [], []
    for g in (g1, g2):
        rows = dataset.instance_groups == g
        cdfs.append(empirical_cdf(dataset.scores[rows, k], lo, hi))
        props.append(rows.sum())
    total = props[0] + props[1]
    sol = solve_fair_thresholds(preds[0], preds[1], cdfs[0], cdfs[1], props[0] / total,
                                props[1] / total, t_star, bounds=(lo, hi))
    return sol, preds[0], preds[1]
