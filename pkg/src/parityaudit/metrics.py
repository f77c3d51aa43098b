"""Evaluation metrics: calibration error, parity error, AUC and ECE."""
from dataclasses import dataclass
from itertools import permutations
from typing import Optional, Tuple

import numpy as np
from scipy import stats

from .estimator import _check_mode, estimate_curve
from .exceptions import DataError, DegenerateOutcomeError, EstimationError

METRICS = ("npce", "parity_error", "auc", "ece")


@dataclass(frozen=True)
class MetricReport:
    name: str
    value: float
    ci: Optional[Tuple[float, float]] = None
    config: Optional[dict] = None

    def to_dict(self):
        return {"metric": self.name, "value": self.value,
                "ci": None if self.ci is None else list(self.ci),
                "config": self.config or {}}


def group_curves(dataset, grid, mode="user", k=0, bandwidth="auto", kernel="gaussian"):
    """NW curve of every group on a shared grid, with points missing in any
    group dropped for all of them.

    Returns ``(points, {group: values}, dropped_points)``.
    """
    mode = _check_mode(mode)
    points = np.atleast_1d(np.asarray(getattr(grid, "points", grid), dtype=float))
    curves = {g: estimate_curve(dataset, g, points, mode=mode, k=k, bandwidth=bandwidth,
                                kernel=kernel, allow_missing=True)
              for g in dataset.group_levels}
    ok = np.all([c.estimable for c in curves.values()], axis=0)
    if not np.any(ok):
        raise EstimationError("no grid point is estimable in every group")
    return points[ok], {g: c.values[ok] for g, c in curves.items()}, points[~ok]


def npce_from_curves(points, curves):
    """Mean over grid points of the summed per-group gaps ``|f_g(s) - s|``."""
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        raise EstimationError("empty grid")
    return float(sum(np.abs(np.asarray(v) - points) for v in curves.values()).mean())


def parity_error_from_curves(curves):
    """Mean over grid points of ``|f_g(s) - f_h(s)|`` summed over ordered
    group pairs, so each unordered pair counts twice."""
    vals = [np.asarray(v, dtype=float) for v in curves.values()]
    if len(vals) < 2:
        raise DataError("parity error needs at least two groups")
    if len(vals[0]) == 0:
        raise EstimationError("empty grid")
    total = sum(np.abs(a - b) for a, b in permutations(vals, 2))
    return float(total.mean())


def npce(dataset, grid, mode="user", k=0, bandwidth="auto", kernel="gaussian"):
    """Non-parametric calibration error of the k-th score."""
    points, curves, _ = group_curves(dataset, grid, mode, k, bandwidth, kernel)
    return npce_from_curves(points, curves)


def parity_error(dataset, grid, mode="user", k=0, bandwidth="auto", kernel="gaussian"):
    """Parity error (ordered-pair convention) of the k-th score."""
    _, curves, _ = group_curves(dataset, grid, mode, k, bandwidth, kernel)
    return parity_error_from_curves(curves)


def auc_score(scores, outcomes):
    """Mann-Whitney AUC with mid-rank tie handling."""
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    if not np.all((y == 0) | (y == 1)):
        raise DataError("AUC needs binary outcomes")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateOutcomeError("AUC needs both outcome classes")
    ranks = stats.rankdata(scores)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auc(dataset, group=None, k=0):
    rows = slice(None) if group is None else dataset.instance_groups == group
    return auc_score(dataset.scores[rows, k], dataset.outcomes[rows, k])


def ece_score(scores, outcomes, bins=10):
    """Expected calibration error over equal-width bins on [0, 1]."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    idx = np.clip((scores * bins).astype(int), 0, bins - 1)
    n = np.bincount(idx, minlength=bins)
    gap = np.abs(np.bincount(idx, scores, bins) - np.bincount(idx, y, bins))
    # sum_b (n_b / N) |mean_s - mean_y| = sum_b |sum_s - sum_y| / N
    return float(gap[n > 0].sum() / len(scores))


def ece(dataset, bins=10, k=0):
    return ece_score(dataset.scores[:, k], dataset.outcomes[:, k], bins)
