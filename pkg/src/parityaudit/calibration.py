"""Per-group post-processing calibrators.

Four univariate families (binning, linear interpolation between NW knot
estimates, Platt scaling, isotonic regression) plus a multi-objective
calibrator that maps a score vector to the NW estimate of every objective's
conditional mean. All follow the scikit-learn transformer protocol;
:class:`GroupCalibrator` fits one univariate calibrator per group.
"""
import json
import warnings

import numpy as np
from scipy import special
from sklearn.base import BaseEstimator, TransformerMixin, clone
from sklearn.utils.validation import check_is_fitted

from ._logistic import newton_logistic
from .data import ClusteredDataset
from .estimator import _check_mode, estimate_curve, nw_multivariate_batch, MAX_DIM
from .exceptions import (DataError, DegenerateOutcomeError, DimensionalityError,
                         NoMassError)
from .kernels import rule_of_thumb_bandwidth

FORMAT_VERSION = 1
METHODS = ("none", "binning", "linear_interp", "platt", "isotonic")


def _member_weights(members, n):
    if members is None:
        return np.ones(n)
    _, inverse, counts = np.unique(np.asarray(members).astype(str), return_inverse=True,
                                   return_counts=True)
    return 1.0 / counts[inverse]


def _weights(weighting, members, n):
    if weighting == "instance":
        return np.ones(n)
    if weighting == "member":
        return _member_weights(members, n)
    raise ValueError("weighting must be 'instance' or 'member'")


def _xy(X, y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise DimensionalityError("univariate calibrators take one score column")
        X = X[:, 0]
    if X.ndim != 1:
        raise DataError("scores must be one-dimensional")
    if y is None:
        return X
    y = np.ravel(np.asarray(y, dtype=float))
    if len(y) != len(X):
        raise DataError("scores and outcomes differ in length")
    if len(X) == 0:
        raise DataError("no training instances")
    return X, y


def make_bins(scores, n_bins=10, strategy="quantile"):
    """Strictly increasing bin edges covering the scores.

    ``quantile`` gives equal-frequency bins (ties can merge bins),
    ``uniform`` equal-width bins over [0, 1].
    """
    scores = np.asarray(scores, dtype=float)
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if strategy == "quantile":
        edges = np.unique(np.quantile(scores, np.linspace(0, 1, n_bins + 1)))
    elif strategy == "uniform":
        edges = np.linspace(0.0, 1.0, n_bins + 1)
    else:
        raise ValueError("strategy must be 'quantile' or 'uniform'")
    if len(edges) < 2:
        edges = np.array([edges[0], np.nextafter(edges[0], np.inf)])
    return edges


def bin_index(scores, edges):
    """Bin of each score for ``[l_i, u_i)`` bins; the last bin is closed and
    out-of-range scores fall into the outermost bins."""
    idx = np.searchsorted(edges, scores, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def pava(x, y, sample_weight=None):
    """Weighted least-squares isotonic (non-decreasing) fit.

    Tied ``x`` values are pooled first. Returns the distinct sorted ``x``
    and the fitted value at each.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones(len(x)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    order = np.argsort(x, kind="stable")
    x, y, w = x[order], y[order], w[order]
    xs, start = np.unique(x, return_index=True)
    wsum = np.add.reduceat(w, start)
    ysum = np.add.reduceat(w * y, start)
    # blocks as parallel stacks: weighted mean, weight, number of tie-groups
    means, weights, counts = [], [], []
    for m, wt in zip(ysum / wsum, wsum):
        means.append(m)
        weights.append(wt)
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            w2 = weights[-2] + weights[-1]
            means[-2] = (means[-2] * weights[-2] + means[-1] * weights[-1]) / w2
            weights[-2] = w2
            counts[-2] += counts[-1]
            del means[-1], weights[-1], counts[-1]
    return xs, np.repeat(means, counts)


class _Calibrator(TransformerMixin, BaseEstimator):
    family = ""

    def _check_range(self, y):
        self.unit_range_ = bool(np.all((y >= 0) & (y <= 1)))

    def _clip(self, v):
        return np.clip(v, 0.0, 1.0) if getattr(self, "unit_range_", True) else v

    def to_dict(self):
        raise NotImplementedError

    @classmethod
    def from_dict(cls, d):
        raise NotImplementedError


class IdentityCalibrator(_Calibrator):
    """Leaves scores unchanged; the baseline in comparisons."""

    family = "none"

    def fit(self, X, y=None, members=None):
        self.fitted_ = True
        return self

    def transform(self, X):
        return _xy(X).copy()

    def to_dict(self):
        return {}

    @classmethod
    def from_dict(cls, d):
        return cls().fit(None)


class BinningCalibrator(_Calibrator):
    """Replace a score by the mean outcome of its bin.

    Parameters
    ----------
    n_bins : int
        Used when ``edges`` is None.
    edges : array-like, optional
        Explicit bin edges ``l_0 < ... < l_K``.
    strategy : {"quantile", "uniform"}
    weighting : {"instance", "member"}
        "member" gives each member's instances total weight one.
    """

    family = "binning"

    def __init__(self, n_bins=10, edges=None, strategy="quantile", weighting="instance"):
        self.n_bins = n_bins
        self.edges = edges
        self.strategy = strategy
        self.weighting = weighting

    def fit(self, X, y, members=None):
        X, y = _xy(X, y)
        self._check_range(y)
        edges = (make_bins(X, self.n_bins, self.strategy) if self.edges is None
                 else np.asarray(self.edges, dtype=float))
        if len(edges) < 2 or np.any(np.diff(edges) <= 0):
            raise DataError("bin edges must be strictly increasing")
        w = _weights(self.weighting, members, len(X))
        idx = bin_index(X, edges)
        nb = len(edges) - 1
        wsum = np.bincount(idx, weights=w, minlength=nb)
        ysum = np.bincount(idx, weights=w * y, minlength=nb)
        filled = wsum > 0
        means = np.zeros(nb)
        means[filled] = ysum[filled] / wsum[filled]
        full = np.flatnonzero(filled)
        for b in np.flatnonzero(~filled):
            means[b] = means[full[np.argmin(np.abs(full - b))]]
        self.edges_ = edges
        self.values_ = means
        self.empty_bins_ = np.flatnonzero(~filled)
        return self

    def transform(self, X):
        check_is_fitted(self, "values_")
        return self.values_[bin_index(_xy(X), self.edges_)]

    def to_dict(self):
        return {"edges": self.edges_.tolist(), "values": self.values_.tolist()}

    @classmethod
    def from_dict(cls, d):
        cal = cls(edges=d["edges"])
        cal.edges_ = np.asarray(d["edges"], dtype=float)
        cal.values_ = np.asarray(d["values"], dtype=float)
        cal.empty_bins_ = np.array([], dtype=int)
        return cal


class LinearInterpCalibrator(_Calibrator):
    """Interpolate linearly between clustered NW estimates at the bin edges.

    Inside a bin ``[l, u)`` the score maps to the straight line through
    ``(l, f(l))`` and ``(u, f(u))``; outside the outermost edges the boundary
    value is held. Output is clipped to [0, 1] for unit-range outcomes.
    """

    family = "linear_interp"

    def __init__(self, n_bins=10, edges=None, strategy="quantile", bandwidth="auto",
                 kernel="gaussian", mode="user"):
        self.n_bins = n_bins
        self.edges = edges
        self.strategy = strategy
        self.bandwidth = bandwidth
        self.kernel = kernel
        self.mode = mode

    def fit(self, X, y, members=None):
        X, y = _xy(X, y)
        self._check_range(y)
        edges = (make_bins(X, self.n_bins, self.strategy) if self.edges is None
                 else np.asarray(self.edges, dtype=float))
        ids = np.arange(len(X)) if members is None else members
        ds = ClusteredDataset.from_arrays(ids, np.zeros(len(X), int), X, y, bounded=False)
        curve = estimate_curve(ds, "0", edges, mode=_check_mode(self.mode),
                               bandwidth=self.bandwidth, kernel=self.kernel)
        self.knots_ = edges
        self.values_ = curve.values
        return self

    @classmethod
    def from_knots(cls, knots, values):
        cal = cls(edges=knots)
        cal.knots_ = np.asarray(knots, dtype=float)
        cal.values_ = np.asarray(values, dtype=float)
        cal.unit_range_ = True
        return cal

    def transform(self, X):
        check_is_fitted(self, "values_")
        return self._clip(np.interp(_xy(X), self.knots_, self.values_))

    def to_dict(self):
        return {"knots": self.knots_.tolist(), "values": self.values_.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls.from_knots(d["knots"], d["values"])


class PlattCalibrator(_Calibrator):
    """Logistic recalibration ``1 / (1 + exp(-(a s + b)))`` fit by maximum
    likelihood with damped Newton steps."""

    family = "platt"

    def __init__(self, weighting="instance", max_iter=100, tol=1e-8):
        self.weighting = weighting
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y, members=None):
        X, y = _xy(X, y)
        if np.any((y < 0) | (y > 1)):
            raise DataError("Platt scaling needs outcomes in [0, 1]")
        if np.all(y == y[0]):
            raise DegenerateOutcomeError("Platt scaling needs both outcome classes; "
                                         f"all outcomes equal {y[0]:g}")
        w = _weights(self.weighting, members, len(X))
        design = np.column_stack([np.ones(len(X)), X])
        beta, n_iter, grad = newton_logistic(design, y, w, max_iter=self.max_iter,
                                             tol=self.tol)
        self.b_, self.a_ = float(beta[0]), float(beta[1])
        self.n_iter_ = n_iter
        self.converged_ = grad < self.tol
        if abs(self.a_) > 1e4:
            warnings.warn("Platt fit looks separated (|a| > 1e4)")
        return self

    def transform(self, X):
        check_is_fitted(self, "a_")
        return special.expit(self.a_ * _xy(X) + self.b_)

    def to_dict(self):
        return {"a": self.a_, "b": self.b_}

    @classmethod
    def from_dict(cls, d):
        cal = cls()
        cal.a_, cal.b_ = float(d["a"]), float(d["b"])
        return cal


class IsotonicCalibrator(_Calibrator):
    """Pool-adjacent-violators fit applied as a right-continuous step function,
    held constant outside the training range."""

    family = "isotonic"

    def __init__(self, weighting="instance"):
        self.weighting = weighting

    def fit(self, X, y, members=None):
        X, y = _xy(X, y)
        w = _weights(self.weighting, members, len(X))
        self.x_, self.y_ = pava(X, y, w)
        return self

    def transform(self, X):
        check_is_fitted(self, "y_")
        idx = np.clip(np.searchsorted(self.x_, _xy(X), side="right") - 1, 0, len(self.x_) - 1)
        return self.y_[idx]

    def to_dict(self):
        return {"x": self.x_.tolist(), "y": self.y_.tolist()}

    @classmethod
    def from_dict(cls, d):
        cal = cls()
        cal.x_ = np.asarray(d["x"], dtype=float)
        cal.y_ = np.asarray(d["y"], dtype=float)
        return cal


_FAMILIES = {c.family: c for c in (IdentityCalibrator, BinningCalibrator,
                                   LinearInterpCalibrator, PlattCalibrator,
                                   IsotonicCalibrator)}


def make_calibrator(method, **params):
    try:
        return _FAMILIES[method](**params)
    except KeyError:
        raise ValueError(f"unknown calibration method {method!r}; choose from {METHODS}") \
            from None


class GroupCalibrator(TransformerMixin, BaseEstimator):
    """One independently fitted calibrator per group.

    Parameters
    ----------
    method : {"none", "binning", "linear_interp", "platt", "isotonic"}
    params : dict, optional
        Keyword arguments for the per-group calibrator.
    """

    def __init__(self, method="linear_interp", params=None):
        self.method = method
        self.params = params

    def fit(self, X, y, groups, members=None):
        X, y = _xy(X, y)
        groups = np.char.strip(np.asarray(groups).astype(str))
        template = make_calibrator(self.method, **(self.params or {}))
        self.calibrators_ = {}
        for g in dict.fromkeys(groups.tolist()):
            rows = groups == g
            sub_members = None if members is None else np.asarray(members)[rows]
            self.calibrators_[g] = clone(template).fit(X[rows], y[rows], members=sub_members)
        return self

    @property
    def groups_(self):
        return list(self.calibrators_)

    def transform(self, X, groups):
        check_is_fitted(self, "calibrators_")
        X = _xy(X)
        groups = np.char.strip(np.asarray(groups).astype(str))
        unseen = set(groups.tolist()) - set(self.calibrators_)
        if unseen:
            raise DataError(f"groups {sorted(unseen)} were not seen at fit time")
        out = np.empty(len(X))
        for g, cal in self.calibrators_.items():
            rows = groups == g
            if np.any(rows):
                out[rows] = cal.transform(X[rows])
        return out

    def fit_dataset(self, dataset, k=0):
        return self.fit(dataset.scores[:, k], dataset.outcomes[:, k],
                        dataset.instance_groups, dataset.member_ids[dataset.member_index])

    def transform_dataset(self, dataset, k=0):
        """Dataset copy whose k-th score column is recalibrated."""
        scores = dataset.scores.copy()
        scores[:, k] = self.transform(dataset.scores[:, k], dataset.instance_groups)
        return dataset.with_scores(scores)

    def to_dict(self):
        check_is_fitted(self, "calibrators_")
        return {"version": FORMAT_VERSION, "family": self.method,
                "params": self.params or {},
                "groups": {g: c.to_dict() for g, c in self.calibrators_.items()}}

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != FORMAT_VERSION:
            raise DataError(f"unsupported calibrator format version {d.get('version')!r}")
        if d["family"] == "multi_objective":
            raise DataError("use MultiObjectiveCalibrator.from_dict for multi-objective files")
        cal = cls(d["family"], d.get("params") or None)
        cal.calibrators_ = {g: _FAMILIES[d["family"]].from_dict(p)
                            for g, p in d["groups"].items()}
        return cal

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class MultiObjectiveCalibrator(TransformerMixin, BaseEstimator):
    """Map a score vector to NW estimates of every objective's mean outcome.

    For a member of group g with scores ``s = (s_1..s_K)`` the k-th
    transformed score is the product-kernel NW estimate of
    ``E(Y_k | S = s, G = g)``. The training sample is kept and estimates are
    computed at transform time, once per distinct query row.

    Parameters
    ----------
    bandwidth : "auto" or float or array of K floats
        "auto" applies the rule of thumb per coordinate at the query.
    mode : {"user", "aggregate"}
    """

    def __init__(self, bandwidth="auto", kernel="gaussian", mode="user"):
        self.bandwidth = bandwidth
        self.kernel = kernel
        self.mode = mode

    def fit(self, X, Y, groups, members=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.asarray(Y, dtype=float).reshape(X.shape[0], -1)
        if X.shape[1] > MAX_DIM:
            raise DimensionalityError(f"at most {MAX_DIM} objectives are supported")
        if Y.shape[1] != X.shape[1]:
            raise DataError("need one outcome column per score column")
        groups = np.char.strip(np.asarray(groups).astype(str))
        mode = _check_mode(self.mode)
        self.samples_ = {}
        for g in dict.fromkeys(groups.tolist()):
            rows = groups == g
            ids = (np.arange(rows.sum()) if members is None
                   else np.asarray(members).astype(str)[rows])
            w = _member_weights(ids, rows.sum()) if mode == "user" else np.ones(rows.sum())
            n = len(np.unique(ids)) if mode == "user" else int(rows.sum())
            self.samples_[g] = (X[rows], Y[rows], w, n)
        self.n_features_in_ = X.shape[1]
        return self

    def _bandwidths(self, queries, n):
        if isinstance(self.bandwidth, str) and self.bandwidth == "auto":
            return rule_of_thumb_bandwidth(np.clip(queries, 0.0, 1.0), n)
        return np.broadcast_to(np.asarray(self.bandwidth, dtype=float), queries.shape)

    def transform(self, X, groups):
        check_is_fitted(self, "samples_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features_in_:
            raise DataError(f"expected {self.n_features_in_} score columns")
        groups = np.char.strip(np.asarray(groups).astype(str))
        unseen = set(groups.tolist()) - set(self.samples_)
        if unseen:
            raise DataError(f"groups {sorted(unseen)} were not seen at fit time")
        out = np.empty_like(X)
        for g, (S, Y, w, n) in self.samples_.items():
            rows = groups == g
            if not np.any(rows):
                continue
            queries, inverse = np.unique(X[rows], axis=0, return_inverse=True)
            vals, den = nw_multivariate_batch(S, Y, w, queries, self._bandwidths(queries, n),
                                              kernel=self.kernel)
            if np.any(den <= 0):
                raise NoMassError(f"no kernel mass for group {g!r} at some queries")
            out[rows] = vals[np.ravel(inverse)]
        return out

    def composite(self, X, groups, weights):
        return self.transform(X, groups) @ np.asarray(weights, dtype=float)

    def transform_dataset(self, dataset):
        return dataset.with_scores(self.transform(dataset.scores, dataset.instance_groups))

    def to_dict(self):
        check_is_fitted(self, "samples_")
        return {"version": FORMAT_VERSION, "family": "multi_objective",
                "params": {"bandwidth": self.bandwidth, "kernel": self.kernel,
                           "mode": self.mode},
                "groups": {g: {"scores": S.tolist(), "outcomes": Y.tolist(),
                               "weights": w.tolist(), "n": n}
                           for g, (S, Y, w, n) in self.samples_.items()}}

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != FORMAT_VERSION or d.get("family") != "multi_objective":
            raise DataError("not a multi-objective calibrator document")
        cal = cls(**d["params"])
        cal.samples_ = {g: (np.asarray(p["scores"], float), np.asarray(p["outcomes"], float),
                            np.asarray(p["weights"], float), int(p["n"]))
                        for g, p in d["groups"].items()}
        cal.n_features_in_ = next(iter(cal.samples_.values()))[0].shape[1]
        return cal


def load_calibrator(path):
    """Read any calibrator JSON document written by this package."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("family") == "multi_objective":
        return MultiObjectiveCalibrator.from_dict(d)
    return GroupCalibrator.from_dict(d)


# -- dataset-level helpers ----------------------------------------------------------

def _group_arrays(train, group, k):
    rows = train.instance_groups == group
    if not np.any(rows):
        raise DataError(f"group {group!r} not present")
    return (train.scores[rows, k], train.outcomes[rows, k],
            train.member_ids[train.member_index][rows])


def fit_binning(train, group, bins=None, k=0, weighting="instance"):
    s, y, m = _group_arrays(train, group, k)
    return BinningCalibrator(edges=bins, weighting=weighting).fit(s, y, members=m)


def fit_linear_interp(train, group, bins=None, h_rule="auto", k=0, mode="user"):
    s, y, m = _group_arrays(train, group, k)
    return LinearInterpCalibrator(edges=bins, bandwidth=h_rule, mode=mode).fit(s, y, members=m)


def fit_platt(train, group, k=0, weighting="instance"):
    s, y, m = _group_arrays(train, group, k)
    return PlattCalibrator(weighting=weighting).fit(s, y, members=m)


def fit_isotonic(train, group, k=0, weighting="instance"):
    s, y, m = _group_arrays(train, group, k)
    return IsotonicCalibrator(weighting=weighting).fit(s, y, members=m)


def fit_per_group(train, method="linear_interp", params=None, k=0):
    return GroupCalibrator(method, params).fit_dataset(train, k)


def fit_multi_objective(train, group=None, h_rule="auto", mode="user"):
    """Fit on every group of ``train`` (or only ``group``)."""
    if group is not None:
        train = train.select_group(group)
    return MultiObjectiveCalibrator(bandwidth=h_rule, mode=mode).fit(
        train.scores, train.outcomes, train.instance_groups,
        train.member_ids[train.member_index])
