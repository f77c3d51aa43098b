"""Clustered (repeat-member) observations: construction, CSV I/O, splitting
and cluster resampling.

Instances are stored flat and contiguous by member so that per-member sums
reduce to ``np.add.reduceat`` over ``starts``.
"""
import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .exceptions import DataError, GroupConsistencyError, ParseError, SchemaError

DEFAULT_SCHEMA = {"member_id": "member_id", "group": "group",
                  "score": "score", "outcome": "outcome"}


@dataclass(frozen=True)
class Observation:
    scores: tuple
    outcomes: tuple

    def __post_init__(self):
        if len(self.scores) != len(self.outcomes):
            raise DataError("scores and outcomes must have the same length")
        if len(self.scores) < 1:
            raise DataError("an observation needs at least one objective")


@dataclass(frozen=True)
class Member:
    member_id: str
    group: str
    instances: tuple

    def __post_init__(self):
        if not self.instances:
            raise DataError(f"member {self.member_id!r} has no instances")

    @property
    def n(self):
        return len(self.instances)


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ClusteredDataset:
    """Members with a fixed group label and one or more scored instances.

    Parameters
    ----------
    member_ids, groups : array-like of str, shape (M,)
    sizes : array-like of int, shape (M,)
        Instance count ``n_m`` of every member.
    scores, outcomes : array-like, shape (N, K)
        Instance rows, contiguous per member in member order.
    bounded : bool
        Require every score to lie in [0, 1].
    """

    member_ids: np.ndarray
    groups: np.ndarray
    sizes: np.ndarray
    scores: np.ndarray
    outcomes: np.ndarray
    bounded: bool = True
    starts: np.ndarray = field(init=False, repr=False)
    member_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        member_ids = np.asarray(self.member_ids).astype(str)
        groups = np.char.strip(np.asarray(self.groups).astype(str))
        sizes = np.asarray(self.sizes, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=float)
        outcomes = np.asarray(self.outcomes, dtype=float)
        if scores.ndim == 1:
            scores = scores[:, None]
        if outcomes.ndim == 1:
            outcomes = outcomes[:, None]
        if not (len(member_ids) == len(groups) == len(sizes)):
            raise DataError("member_ids, groups and sizes differ in length")
        if scores.shape != outcomes.shape:
            raise DataError("scores and outcomes must have the same shape")
        if np.any(sizes < 1):
            raise DataError("every member needs at least one instance")
        if int(sizes.sum()) != scores.shape[0]:
            raise DataError("sum of member sizes does not match instance count")
        if not np.all(np.isfinite(scores)) or not np.all(np.isfinite(outcomes)):
            raise DataError("scores and outcomes must be finite")
        if self.bounded and scores.size and (scores.min() < 0 or scores.max() > 1):
            raise DataError("scores must lie in [0, 1] for a bounded dataset")
        starts = np.zeros(len(sizes), dtype=np.int64)
        if len(sizes):
            starts[1:] = np.cumsum(sizes)[:-1]
        set_ = object.__setattr__
        set_(self, "member_ids", _readonly(member_ids))
        set_(self, "groups", _readonly(groups))
        set_(self, "sizes", _readonly(sizes))
        set_(self, "scores", _readonly(scores))
        set_(self, "outcomes", _readonly(outcomes))
        set_(self, "starts", _readonly(starts))
        set_(self, "member_index", _readonly(np.repeat(np.arange(len(sizes)), sizes)))

    # -- construction -----------------------------------------------------
    @classmethod
    def from_members(cls, members: Sequence[Member], bounded=True):
        if not members:
            raise DataError("no members")
        K = len(members[0].instances[0].scores)
        scores, outcomes = [], []
        for m in members:
            for obs in m.instances:
                if len(obs.scores) != K:
                    raise DataError(f"member {m.member_id!r} has K != {K}")
                scores.append(obs.scores)
                outcomes.append(obs.outcomes)
        return cls([m.member_id for m in members], [m.group for m in members],
                   [m.n for m in members], scores, outcomes, bounded=bounded)

    @classmethod
    def from_arrays(cls, member_id, group, scores, outcomes, bounded=True):
        """Group instance-level arrays by member (first-appearance order)."""
        member_id = np.asarray(member_id).astype(str)
        group = np.char.strip(np.asarray(group).astype(str))
        scores = np.asarray(scores, dtype=float)
        outcomes = np.asarray(outcomes, dtype=float)
        if scores.ndim == 1:
            scores = scores[:, None]
        if outcomes.ndim == 1:
            outcomes = outcomes[:, None]
        if len(member_id) == 0:
            raise DataError("no instances")
        uniq, first, inverse = np.unique(member_id, return_index=True, return_inverse=True)
        rank = np.empty(len(uniq), dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(len(uniq))
        code = rank[inverse]
        order = np.argsort(code, kind="stable")
        code = code[order]
        grp = group[order]
        starts = np.flatnonzero(np.r_[True, code[1:] != code[:-1]])
        member_group = grp[starts]
        sizes = np.diff(np.r_[starts, len(code)])
        clash = np.flatnonzero(grp != np.repeat(member_group, sizes))
        if len(clash):
            mid = member_id[order][clash[0]]
            raise GroupConsistencyError(f"member {mid!r} appears with more than one group")
        return cls(member_id[order][starts], member_group, sizes,
                   scores[order], outcomes[order], bounded=bounded)

    # -- shape --------------------------------------------------------------
    @property
    def M(self):
        return len(self.member_ids)

    @property
    def N(self):
        return self.scores.shape[0]

    @property
    def K(self):
        return self.scores.shape[1]

    @property
    def group_levels(self):
        _, idx = np.unique(self.groups, return_index=True)
        return [str(g) for g in self.groups[np.sort(idx)]]

    @property
    def instance_groups(self):
        return self.groups[self.member_index]

    @property
    def members(self):
        out = []
        for i in range(self.M):
            lo, hi = self.starts[i], self.starts[i] + self.sizes[i]
            inst = tuple(Observation(tuple(self.scores[j]), tuple(self.outcomes[j]))
                         for j in range(lo, hi))
            out.append(Member(str(self.member_ids[i]), str(self.groups[i]), inst))
        return out

    def __len__(self):
        return self.M

    def __repr__(self):
        return (f"ClusteredDataset(M={self.M}, N={self.N}, K={self.K}, "
                f"groups={self.group_levels})")

    def equals(self, other, atol=0.0):
        return (self.K == other.K and self.M == other.M
                and np.array_equal(self.member_ids, other.member_ids)
                and np.array_equal(self.groups, other.groups)
                and np.array_equal(self.sizes, other.sizes)
                and np.allclose(self.scores, other.scores, rtol=0, atol=atol)
                and np.allclose(self.outcomes, other.outcomes, rtol=0, atol=atol))

    # -- derived datasets -------------------------------------------------------
    def take(self, members, member_ids=None):
        """Dataset made of the given member positions (repeats allowed)."""
        members = np.asarray(members, dtype=np.int64)
        sizes = self.sizes[members]
        new_starts = np.cumsum(sizes) - sizes
        rows = np.repeat(self.starts[members] - new_starts, sizes) + np.arange(sizes.sum())
        ids = self.member_ids[members] if member_ids is None else member_ids
        return ClusteredDataset(ids, self.groups[members], self.sizes[members],
                                self.scores[rows], self.outcomes[rows], bounded=self.bounded)

    def select_group(self, group):
        return self.take(np.flatnonzero(self.groups == group))

    def with_scores(self, scores, bounded=None):
        """Same members and outcomes, replaced instance scores."""
        scores = np.asarray(scores, dtype=float)
        if scores.ndim == 1:
            scores = scores[:, None]
        return ClusteredDataset(self.member_ids, self.groups, self.sizes, scores,
                                self.outcomes, bounded=self.bounded if bounded is None else bounded)

    def composite(self, weights):
        """K=1 dataset with weighted-sum scores and outcomes."""
        w = np.asarray(weights, dtype=float)
        if w.shape != (self.K,):
            raise DataError(f"need {self.K} composite weights, got {w.shape}")
        return ClusteredDataset(self.member_ids, self.groups, self.sizes,
                                self.scores @ w, self.outcomes @ w, bounded=False)

    # -- I/O ------------------------------------------------------------------
    def to_csv(self, path):
        """Write the standard CSV layout to a path or an open text stream."""
        if hasattr(path, "write"):
            self._write_csv(path)
            return
        with open(path, "w", newline="", encoding="utf-8") as fh:
            self._write_csv(fh)

    def _write_csv(self, fh):
        header = ["member_id", "group"] + _score_columns(self.K) + _outcome_columns(self.K)
        writer = csv.writer(fh)
        writer.writerow(header)
        gi = self.instance_groups
        mi = self.member_ids[self.member_index]
        for j in range(self.N):
            writer.writerow([mi[j], gi[j]] + [repr(float(v)) for v in self.scores[j]]
                            + [repr(float(v)) for v in self.outcomes[j]])


def _score_columns(K, base="score"):
    return [base] + [f"{base}_{k}" for k in range(2, K + 1)]


def _outcome_columns(K, base="outcome"):
    return [base] + [f"{base}_{k}" for k in range(2, K + 1)]


def parse_schema(text):
    """``"member_id=uid,group=sex"`` -> mapping onto the default column names."""
    schema = dict(DEFAULT_SCHEMA)
    if not text:
        return schema
    for item in text.split(","):
        if "=" not in item:
            raise SchemaError(f"bad schema entry {item!r}; expected key=column")
        key, col = (p.strip() for p in item.split("=", 1))
        if key not in DEFAULT_SCHEMA:
            raise SchemaError(f"unknown schema key {key!r}")
        schema[key] = col
    return schema


def _indexed_columns(header, base):
    """Locate ``base`` (or ``base_1``) then ``base_2``, ``base_3`` ... in order."""
    if base in header:
        cols = [base]
    elif f"{base}_1" in header:
        cols = [f"{base}_1"]
    else:
        raise SchemaError(f"missing column {base!r}")
    k = 2
    while f"{base}_{k}" in header:
        cols.append(f"{base}_{k}")
        k += 1
    return cols


def load_csv(path, schema: Optional[Mapping[str, str]] = None, bounded=True):
    """Read a ``member_id,group,score[,score_2..],outcome[,outcome_2..]`` file."""
    schema = dict(DEFAULT_SCHEMA, **(schema or {}))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        for key in ("member_id", "group"):
            if schema[key] not in header:
                raise SchemaError(f"missing column {schema[key]!r}")
        score_cols = _indexed_columns(header, schema["score"])
        outcome_cols = _indexed_columns(header, schema["outcome"])
        if len(score_cols) != len(outcome_cols):
            raise SchemaError(f"{len(score_cols)} score columns but "
                              f"{len(outcome_cols)} outcome columns")
        pos = {h: i for i, h in enumerate(header)}
        mid_i, grp_i = pos[schema["member_id"]], pos[schema["group"]]
        s_i = [pos[c] for c in score_cols]
        y_i = [pos[c] for c in outcome_cols]
        ids, groups, scores, outcomes = [], [], [], []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", row_no)
            try:
                s = [float(row[i]) for i in s_i]
            except ValueError:
                raise ParseError("non-numeric score", row_no) from None
            try:
                y = [float(row[i]) for i in y_i]
            except ValueError:
                raise ParseError("missing or non-numeric outcome", row_no) from None
            if not all(math.isfinite(v) for v in s + y):
                raise ParseError("non-finite score or outcome", row_no)
            if bounded and any(v < 0 or v > 1 for v in s):
                raise ParseError("score outside [0, 1]", row_no)
            ids.append(row[mid_i].strip())
            groups.append(row[grp_i].strip())
            scores.append(s)
            outcomes.append(y)
    if not ids:
        raise DataError(f"{path}: no data rows")
    return ClusteredDataset.from_arrays(ids, groups, scores, outcomes, bounded=bounded)


def split(dataset, fraction=0.5, seed=0):
    """Partition members (never instances) into two datasets."""
    if not 0 < fraction < 1:
        raise DataError("fraction must be in (0, 1)")
    if dataset.M == 0:
        raise DataError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(dataset.M)
    cut = int(round(fraction * dataset.M))
    first, second = np.sort(perm[:cut]), np.sort(perm[cut:])
    return dataset.take(first), dataset.take(second)


def bootstrap_resample(dataset, seed=0):
    """Cluster bootstrap: draw M members with replacement, keep their instances."""
    if dataset.M == 0:
        raise DataError("cannot resample an empty dataset")
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, dataset.M, size=dataset.M)
    seen = {}
    ids = []
    for p in picks:
        seen[p] = seen.get(p, 0) + 1
        base = dataset.member_ids[p]
        ids.append(base if seen[p] == 1 else f"{base}#{seen[p]}")
    return dataset.take(picks, member_ids=np.array(ids))
