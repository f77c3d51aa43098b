"""Clustered Nadaraya-Watson regression of outcomes on scores.

Every member contributes a pair of kernel sums at the evaluation point,

    A_m = c_m * sum_i Y_mi K((S_mi - s) / h)
    B_m = c_m * sum_i K((S_mi - s) / h)

with ``c_m = 1 / n_m`` in user-level mode (each member counts once) and
``c_m = 1`` in aggregate mode (each instance counts once). The estimate is
``sum A / sum B`` over the group's members and its variance is the delta
method for a ratio of means of independent cluster totals, which stays
valid under arbitrary dependence between instances of one member.
"""
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import (DataError, DimensionalityError, InsufficientClustersError,
                         NoMassError)
from .kernels import get_kernel, rule_of_thumb_bandwidth

MODES = ("user", "aggregate")
LOW_MASS = 10.0
MAX_DIM = 4


def _check_mode(mode):
    aliases = {"user": "user", "user-level": "user", "aggregate": "aggregate"}
    try:
        return aliases[mode]
    except KeyError:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}") from None


@dataclass(frozen=True)
class ClusterSummary:
    A: float
    B: float


@dataclass(frozen=True)
class PointEstimate:
    s: float
    value: float
    std_error: float
    numerator_mass: float
    denominator_mass: float
    m_effective: float
    bandwidth: float = float("nan")
    low_mass: bool = False


@dataclass(frozen=True)
class Curve:
    """Pointwise estimates on a grid; NaN marks points without kernel mass."""

    grid: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    numerator: np.ndarray
    denominator: np.ndarray
    m_effective: np.ndarray
    bandwidths: np.ndarray
    group: str = ""
    mode: str = "user"

    def __len__(self):
        return len(self.grid)

    def __iter__(self):
        for j in range(len(self.grid)):
            yield PointEstimate(float(self.grid[j]), float(self.values[j]),
                                float(self.std_errors[j]), float(self.numerator[j]),
                                float(self.denominator[j]), float(self.m_effective[j]),
                                float(self.bandwidths[j]), bool(self.low_mass[j]))

    def __getitem__(self, j):
        return list(self)[j]

    @property
    def low_mass(self):
        return self.m_effective < LOW_MASS

    @property
    def estimable(self):
        return np.isfinite(self.values)

    def interval(self, level=0.95):
        z = stats.norm.ppf(0.5 + level / 2)
        return self.values - z * self.std_errors, self.values + z * self.std_errors


def _group_rows(dataset, group):
    members = np.flatnonzero(dataset.groups == group)
    if len(members) == 0:
        raise DataError(f"group {group!r} not present")
    sizes = dataset.sizes[members]
    new_starts = np.cumsum(sizes) - sizes
    rows = np.repeat(dataset.starts[members] - new_starts, sizes) + np.arange(sizes.sum())
    return members, rows, new_starts, sizes


def cluster_summaries(dataset, group, points, h, mode="user", k=0, kernel="gaussian",
                      lower=None):
    """Per-member kernel sums for a group.

    Returns ``(A, B)`` of shape ``(len(points), M_g)``. Instances with score
    below ``lower`` get zero weight but ``n_m`` keeps counting them.
    """
    mode = _check_mode(mode)
    kern = get_kernel(kernel)
    points = np.atleast_1d(np.asarray(points, dtype=float))
    h = np.broadcast_to(np.asarray(h, dtype=float), points.shape)
    if np.any(h <= 0):
        raise ValueError("bandwidth must be positive")
    _, rows, starts, sizes = _group_rows(dataset, group)
    s = dataset.scores[rows, k]
    y = dataset.outcomes[rows, k]
    W = kern((s[None, :] - points[:, None]) / h[:, None])
    if lower is not None:
        W = W * (s >= lower)[None, :]
    A = np.add.reduceat(W * y[None, :], starts, axis=1)
    B = np.add.reduceat(W, starts, axis=1)
    if mode == "user":
        A = A / sizes
        B = B / sizes
    return A, B


def _ratio_stats(A, B):
    """Ratio estimate, delta-method variance and Kish effective count, row-wise."""
    sA = A.sum(axis=-1)
    sB = B.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        R = np.where(sB > 0, sA / sB, np.nan)
        resid = A - np.nan_to_num(R)[..., None] * B
        var = np.where(sB > 0, (resid ** 2).sum(axis=-1) / sB ** 2, np.nan)
        m_eff = np.where(sB > 0, sB ** 2 / (B ** 2).sum(axis=-1), 0.0)
    return R, np.clip(var, 0.0, None), sA, sB, m_eff


def nw_variance(summaries, M=None):
    """Delta-method variance of ``mean(A) / mean(B)`` over independent clusters.

    ``summaries`` holds the group's members (``ClusterSummary`` objects or an
    ``(M_g, 2)`` array). Members outside the group count toward ``M`` with
    zero summaries; moments use the divide-by-M convention::

        v = [var(A) - 2 R cov(A, B) + R^2 var(B)] / (M * mean(B)^2)
    """
    arr = np.array([(c.A, c.B) if isinstance(c, ClusterSummary) else tuple(c)
                    for c in summaries], dtype=float).reshape(-1, 2)
    if len(arr) < 2:
        raise InsufficientClustersError("variance needs at least 2 members")
    M = len(arr) if M is None else int(M)
    if M < len(arr):
        raise ValueError("M is smaller than the number of summaries")
    A = np.r_[arr[:, 0], np.zeros(M - len(arr))]
    B = np.r_[arr[:, 1], np.zeros(M - len(arr))]
    mA, mB = A.mean(), B.mean()
    if mB <= 0:
        raise NoMassError("no kernel mass; increase the bandwidth")
    R = mA / mB
    var_a = np.mean((A - mA) ** 2)
    var_b = np.mean((B - mB) ** 2)
    cov = np.mean((A - mA) * (B - mB))
    v = (var_a - 2 * R * cov + R * R * var_b) / (M * mB * mB)
    return max(float(v), 0.0)


def auto_bandwidth(dataset, group, points, mode="user"):
    """Rule-of-thumb bandwidth per point; n counts members (user) or instances."""
    mode = _check_mode(mode)
    members = dataset.groups == group
    n = int(members.sum()) if mode == "user" else int(dataset.sizes[members].sum())
    if n == 0:
        raise DataError(f"group {group!r} not present")
    return rule_of_thumb_bandwidth(np.asarray(points, dtype=float), n,
                                   bounded=dataset.bounded)


def _resolve_bandwidth(dataset, group, points, bandwidth, mode):
    if bandwidth is None or (isinstance(bandwidth, str) and bandwidth == "auto"):
        return np.atleast_1d(auto_bandwidth(dataset, group, points, mode))
    return np.broadcast_to(np.asarray(bandwidth, dtype=float), np.shape(points)).copy()


def estimate_curve(dataset, group, grid, mode="user", k=0, bandwidth="auto",
                   kernel="gaussian", lower=None, allow_missing=False):
    """Pointwise clustered NW estimates over a grid.

    ``grid`` is a ``ScoreGrid`` or any sequence of scores. Points with no
    kernel mass raise :class:`NoMassError` unless ``allow_missing``, in which
    case they come back as NaN. Points whose effective member count falls
    under 10 keep their estimate but get a standard error inflated by
    ``sqrt(10 / m_eff)`` and a low-mass flag.
    """
    mode = _check_mode(mode)
    points = np.atleast_1d(np.asarray(getattr(grid, "points", grid), dtype=float))
    h = _resolve_bandwidth(dataset, group, points, bandwidth, mode)
    A, B = cluster_summaries(dataset, group, points, h, mode=mode, k=k, kernel=kernel,
                             lower=lower)
    R, var, sA, sB, m_eff = _ratio_stats(A, B)
    if not allow_missing and np.any(sB <= 0):
        bad = points[sB <= 0][0]
        raise NoMassError(f"no kernel mass for group {group!r} at s={bad:.4g}; "
                          "use a larger bandwidth")
    se = np.sqrt(var)
    thin = (m_eff < LOW_MASS) & (m_eff > 0)
    if np.any(thin):
        se = np.where(thin, se * np.sqrt(LOW_MASS / np.where(thin, m_eff, 1.0)), se)
    return Curve(points, R, se, sA, sB, m_eff, h, str(group), mode)


def _point(dataset, group, s, h, k, mode, kernel, lower=None):
    curve = estimate_curve(dataset, group, [s], mode=mode, k=k, bandwidth=h,
                           kernel=kernel, lower=lower)
    return curve[0]


def nw_user_level(dataset, group, s, h, k=0, kernel="gaussian"):
    """Member-averaged NW estimate of E(Y | S = s, G = group)."""
    return _point(dataset, group, s, h, k, "user", kernel)


def nw_aggregate(dataset, group, s, h, k=0, kernel="gaussian"):
    """Instance-pooled NW estimate; variance stays cluster-robust."""
    return _point(dataset, group, s, h, k, "aggregate", kernel)


def product_kernel_weights(train_scores, queries, H, kernel="gaussian"):
    """Product-kernel weight matrix of shape (Q, N)."""
    kern = get_kernel(kernel)
    W = np.ones((queries.shape[0], train_scores.shape[0]))
    for j in range(train_scores.shape[1]):
        W *= kern((train_scores[None, :, j] - queries[:, j, None]) / H[:, j, None])
    return W


def _gaussian_product(S, S_sq, queries, H):
    """Gaussian product kernel via the expanded quadratic form (one exp per pair)."""
    a = 1.0 / H ** 2
    expo = a @ S_sq.T - 2.0 * (a * queries) @ S.T + (a * queries ** 2).sum(axis=1)[:, None]
    np.maximum(expo, 0.0, out=expo)
    expo *= -0.5
    np.exp(expo, out=expo)
    return expo * (2.0 * np.pi) ** (-0.5 * S.shape[1])


def nw_multivariate_batch(train_scores, train_outcomes, weights, queries, H,
                          kernel="gaussian", chunk=512):
    """NW estimates of every outcome column at many K-dimensional queries.

    ``weights`` are per-instance multipliers (``1 / n_m`` for member
    averaging). Returns ``(values, denominator)`` with shapes ``(Q, K_out)``
    and ``(Q,)``.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    H = np.broadcast_to(np.asarray(H, dtype=float), queries.shape)
    if train_scores.shape[1] > MAX_DIM:
        raise DimensionalityError(f"at most {MAX_DIM} conditioning scores are supported")
    wy = train_outcomes * weights[:, None]
    num = np.empty((queries.shape[0], train_outcomes.shape[1]))
    den = np.empty(queries.shape[0])
    fast = isinstance(kernel, str) and kernel == "gaussian"
    if fast:
        sq = train_scores ** 2
    for lo in range(0, queries.shape[0], chunk):
        if fast:
            W = _gaussian_product(train_scores, sq, queries[lo:lo + chunk], H[lo:lo + chunk])
        else:
            W = product_kernel_weights(train_scores, queries[lo:lo + chunk],
                                       H[lo:lo + chunk], kernel)
        num[lo:lo + chunk] = W @ wy
        den[lo:lo + chunk] = W @ weights
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(den[:, None] > 0, num / den[:, None], np.nan)
    return values, den


def nw_multivariate(dataset, group, s_vec, h_vec, k=0, kernel="gaussian"):
    """Member-averaged NW estimate of E(Y_k | S_1..S_K = s_vec, G = group)."""
    s_vec = np.atleast_1d(np.asarray(s_vec, dtype=float))
    h_vec = np.atleast_1d(np.asarray(h_vec, dtype=float))
    if dataset.K > MAX_DIM:
        raise DimensionalityError(f"K={dataset.K} exceeds the supported {MAX_DIM}")
    if s_vec.shape != (dataset.K,) or h_vec.shape != (dataset.K,):
        raise DataError(f"need {dataset.K} scores and bandwidths")
    if np.any(h_vec <= 0):
        raise ValueError("bandwidth must be positive")
    _, rows, starts, sizes = _group_rows(dataset, group)
    S = dataset.scores[rows]
    y = dataset.outcomes[rows, k]
    W = product_kernel_weights(S, s_vec[None, :], h_vec[None, :], kernel)[0]
    A = np.add.reduceat(W * y, starts) / sizes
    B = np.add.reduceat(W, starts) / sizes
    R, var, sA, sB, m_eff = _ratio_stats(A[None, :], B[None, :])
    if sB[0] <= 0:
        raise NoMassError(f"no kernel mass for group {group!r}; use larger bandwidths")
    se = np.sqrt(var[0])
    if m_eff[0] < LOW_MASS:
        se *= np.sqrt(LOW_MASS / m_eff[0])
    return PointEstimate(float("nan"), float(R[0]), float(se), float(sA[0]),
                         float(sB[0]), float(m_eff[0]), float("nan"),
                         bool(m_eff[0] < LOW_MASS))


class ClusteredNadarayaWatson(RegressorMixin, BaseEstimator):
    """Nadaraya-Watson regressor with member-level averaging.

    Parameters
    ----------
    bandwidth : "auto" or float
        "auto" applies the rule-of-thumb bandwidth at each query point.
    kernel : {"gaussian", "epanechnikov"}
    mode : {"user", "aggregate"}

    Examples
    --------
    >>> import numpy as np
    >>> nw = ClusteredNadarayaWatson(bandwidth=0.1).fit([0.4, 0.6, 0.5], [0, 1, 1],
    ...                                                 members=["a", "a", "b"])
    >>> round(float(nw.predict([0.5])[0]), 5)
    0.81123
    """

    def __init__(self, bandwidth="auto", kernel="gaussian", mode="user"):
        self.bandwidth = bandwidth
        self.kernel = kernel
        self.mode = mode

    def fit(self, X, y, members=None):
        from .data import ClusteredDataset

        X = check_array(X, ensure_2d=False, dtype=float)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise DimensionalityError("use nw_multivariate for K > 1")
            X = X[:, 0]
        y = np.asarray(y, dtype=float)
        if members is None:
            members = np.arange(len(X))
        self.dataset_ = ClusteredDataset.from_arrays(members, np.zeros(len(X), int), X, y,
                                                     bounded=False)
        self.n_features_in_ = 1
        return self

    def estimate(self, X):
        check_is_fitted(self, "dataset_")
        X = np.ravel(np.asarray(X, dtype=float))
        bw = self.bandwidth
        if isinstance(bw, str) and bw == "auto":
            n = self.dataset_.M if _check_mode(self.mode) == "user" else self.dataset_.N
            bw = rule_of_thumb_bandwidth(X, n, bounded=False)
        return estimate_curve(self.dataset_, "0", X, mode=self.mode, bandwidth=bw,
                              kernel=self.kernel, allow_missing=True)

    def predict(self, X):
        curve = self.estimate(X)
        if np.any(~curve.estimable):
            warnings.warn("some query points have no kernel mass; returning NaN")
        return curve.values
