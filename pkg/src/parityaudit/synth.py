"""Synthetic clustered data with known calibration curves.

Each member draws an activity level ``n_m = 1 + Poisson(lambda)`` (optionally
from a heavy/light mixture), a random effect ``u_m ~ N(0, tau^2)`` and then
``n_m`` independent Beta scores. Outcomes are Bernoulli with probability
``expit(logit(f(s)) + u_m)`` clipped to [0.001, 0.999].
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special, stats

from .data import ClusteredDataset

P_MIN, P_MAX = 0.001, 0.999
QMC_DRAWS = 100_000


@dataclass(frozen=True)
class Shape:
    """A calibration curve ``f(s)``.

    kind is one of ``identity``, ``shift`` (``clip(s + shift, 0, 1)``),
    ``logistic`` (``expit(a * s + b)``) or ``mixture`` (weighted average of
    ``components``, a tuple of ``(weight, Shape)`` pairs).
    """

    kind: str = "identity"
    shift: float = 0.0
    a: float = 1.0
    b: float = 0.0
    components: tuple = ()

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "identity":
            return s.copy()
        if self.kind == "shift":
            return np.clip(s + self.shift, 0.0, 1.0)
        if self.kind == "logistic":
            return special.expit(self.a * s + self.b)
        if self.kind == "mixture":
            return sum(w * comp(s) for w, comp in self.components)
        raise ValueError(f"unknown shape {self.kind!r}")

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "shift":
            d["shift"] = self.shift
        elif self.kind == "logistic":
            d.update(a=self.a, b=self.b)
        elif self.kind == "mixture":
            d["components"] = [[w, c.to_dict()] for w, c in self.components]
        return d


IDENTITY = Shape()


def shift(delta):
    return Shape("shift", shift=delta)


@dataclass(frozen=True)
class GroupSpec:
    n_members: int = 2000
    calibration: Shape = IDENTITY
    score_a: float = 1.0
    score_b: float = 1.0
    activity: float = 3.0
    heavy_fraction: float = 0.0
    heavy_activity: float = 20.0
    heavy_cutoff: int = 5
    heavy_calibration: Optional[Shape] = None

    def __post_init__(self):
        if self.activity < 0 or self.heavy_activity < 0:
            raise ValueError("activity rates must be >= 0")
        if not 0 <= self.heavy_fraction <= 1:
            raise ValueError("heavy_fraction must be in [0, 1]")
        if self.n_members < 1:
            raise ValueError("need at least one member per group")

    def _size_pmf(self):
        hi = int(max(self.activity, self.heavy_activity) * 10 + 60)
        x = np.arange(hi)
        pmf = ((1 - self.heavy_fraction) * stats.poisson.pmf(x, self.activity)
               + self.heavy_fraction * stats.poisson.pmf(x, self.heavy_activity))
        return x + 1, pmf

    def coupled_share(self, mode="user"):
        """Share of members (user) or instances (aggregate) above the cutoff."""
        if self.heavy_calibration is None:
            return 0.0
        n, pmf = self._size_pmf()
        w = pmf if mode == "user" else pmf * n
        return float(w[n > self.heavy_cutoff].sum() / w.sum())


@dataclass(frozen=True)
class SynthConfig:
    groups: tuple = (("g1", GroupSpec()), ("g2", GroupSpec()))
    tau: float = 0.0
    seed: int = 0

    def __post_init__(self):
        groups = self.groups
        if isinstance(groups, dict):
            groups = tuple(groups.items())
        object.__setattr__(self, "groups", tuple(groups))
        if self.tau < 0:
            raise ValueError("tau must be >= 0")

    @property
    def specs(self):
        return dict(self.groups)

    @classmethod
    def two_groups(cls, M=2000, activity=3.0, tau=0.5, shift2=0.0, seed=0,
                   score_a=1.0, score_b=1.0):
        """Identity calibration for g1, ``clip(s + shift2)`` for g2."""
        g2 = IDENTITY if shift2 == 0 else shift(shift2)
        return cls((("g1", GroupSpec(M, IDENTITY, score_a, score_b, activity)),
                    ("g2", GroupSpec(M, g2, score_a, score_b, activity))), tau, seed)

    @classmethod
    def coupling(cls, M=2000, heavy_shift=0.2, heavy_fraction=0.2, heavy_activity=20.0,
                 activity=1.0, cutoff=5, seed=0):
        """User-level parity holds, aggregate parity fails.

        In g2, members with more than ``cutoff`` instances follow
        ``clip(s + heavy_shift)`` and everyone else the identity. g1 has the
        same activity distribution without the coupling and follows the
        member-weighted mixture of g2's two curves, so both groups share one
        user-level curve while g2's heavy members dominate its instances.
        """
        heavy = shift(heavy_shift)
        g2 = GroupSpec(M, IDENTITY, 1.0, 1.0, activity, heavy_fraction, heavy_activity,
                       cutoff, heavy)
        p = g2.coupled_share("user")
        g1 = GroupSpec(M, Shape("mixture", components=((p, heavy), (1 - p, IDENTITY))),
                       1.0, 1.0, activity, heavy_fraction, heavy_activity, cutoff, None)
        return cls((("g1", g1), ("g2", g2)), 0.0, seed)


def _qmc_effects(tau, draws=QMC_DRAWS):
    return tau * stats.norm.ppf((np.arange(draws) + 0.5) / draws)


def _marginal(shape, s, tau, chunk=64):
    """E_u clip(expit(logit(f(s)) + u)), the member-marginal outcome rate."""
    p = np.clip(shape(s), P_MIN, P_MAX)
    if tau == 0:
        return p
    u = _qmc_effects(tau)
    logit = special.logit(p)
    out = np.empty_like(p)
    flat_in, flat_out = logit.reshape(-1), out.reshape(-1)
    for lo in range(0, len(flat_in), chunk):
        z = flat_in[lo:lo + chunk, None] + u[None, :]
        flat_out[lo:lo + chunk] = np.clip(special.expit(z), P_MIN, P_MAX).mean(axis=1)
    return out


@dataclass(frozen=True)
class GroundTruth:
    config: SynthConfig

    def f(self, group, s, mode="user"):
        """True E(Y | S = s, G = group) for user-level or aggregate weighting."""
        spec = self.config.specs[group]
        s = np.asarray(s, dtype=float)
        base = _marginal(spec.calibration, s, self.config.tau)
        if spec.heavy_calibration is None:
            return base
        w = spec.coupled_share("user" if mode in ("user", "user-level") else "aggregate")
        return w * _marginal(spec.heavy_calibration, s, self.config.tau) + (1 - w) * base

    __call__ = f

    def to_dict(self, grid=None):
        grid = np.linspace(0, 1, 101) if grid is None else np.asarray(grid, dtype=float)
        return {
            "tau": self.config.tau,
            "seed": self.config.seed,
            "groups": {g: {"spec": _spec_dict(spec),
                           "user": self.f(g, grid, "user").tolist(),
                           "aggregate": self.f(g, grid, "aggregate").tolist()}
                       for g, spec in self.config.groups},
            "grid": grid.tolist(),
        }


def _spec_dict(spec):
    return {"n_members": spec.n_members, "calibration": spec.calibration.to_dict(),
            "score_beta": [spec.score_a, spec.score_b], "activity": spec.activity,
            "heavy_fraction": spec.heavy_fraction, "heavy_activity": spec.heavy_activity,
            "heavy_cutoff": spec.heavy_cutoff,
            "heavy_calibration": None if spec.heavy_calibration is None
            else spec.heavy_calibration.to_dict()}


def generate(config, seed=None):
    """Draw a dataset; returns ``(ClusteredDataset, GroundTruth)``."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    ids, groups, sizes, scores, outcomes = [], [], [], [], []
    for name, spec in config.groups:
        M = spec.n_members
        heavy = rng.random(M) < spec.heavy_fraction
        n = 1 + rng.poisson(np.where(heavy, spec.heavy_activity, spec.activity))
        u = rng.normal(0.0, config.tau, M) if config.tau > 0 else np.zeros(M)
        N = int(n.sum())
        s = rng.beta(spec.score_a, spec.score_b, N)
        f = spec.calibration(s)
        if spec.heavy_calibration is not None:
            coupled = np.repeat(n > spec.heavy_cutoff, n)
            f = np.where(coupled, spec.heavy_calibration(s), f)
        p = np.clip(f, P_MIN, P_MAX)
        if config.tau > 0:
            p = np.clip(special.expit(special.logit(p) + np.repeat(u, n)), P_MIN, P_MAX)
        y = (rng.random(N) < p).astype(float)
        ids.append(np.char.add(f"{name}-", np.arange(M).astype(str)))
        groups.append(np.full(M, name))
        sizes.append(n)
        scores.append(s)
        outcomes.append(y)
    ds = ClusteredDataset(np.concatenate(ids), np.concatenate(groups), np.concatenate(sizes),
                          np.concatenate(scores), np.concatenate(outcomes))
    return ds, GroundTruth(config)


# -- two-objective data ----------------------------------------------------------

def multi_objective_truth(group, S, swapped=("g2",)):
    """True ``E(Y | S, G)`` for :func:`generate_multi_objective` data."""
    S = np.asarray(S, dtype=float)
    return S[:, ::-1].copy() if group in swapped else S.copy()


def generate_multi_objective(M=5000, activity=1.0, rho=0.5, seed=0, groups=("g1", "g2"),
                             swapped=("g2",)):
    """Two scores per instance where one score carries the other objective.

    Every instance has latent outcome probabilities ``(P_1, P_2)``:
    ``P_1 ~ Uniform(0, 1)`` and ``P_2 = P_1`` with probability ``rho``,
    otherwise an independent uniform draw. Outcomes are independent
    Bernoulli(P_k). Groups not in ``swapped`` see ``S = (P_1, P_2)``; swapped
    groups see ``S = (P_2, P_1)``, so their S_1 is what informs Y_2. The
    latent law is shared by all groups.
    """
    rng = np.random.default_rng(seed)
    ids, group_col, sizes, scores, outcomes = [], [], [], [], []
    for name in groups:
        n = 1 + rng.poisson(activity, M)
        N = int(n.sum())
        P = rng.random((N, 2))
        tie = rng.random(N) < rho
        P[tie, 1] = P[tie, 0]
        Y = (rng.random((N, 2)) < P).astype(float)
        ids.append(np.char.add(f"{name}-", np.arange(M).astype(str)))
        group_col.append(np.full(M, name))
        sizes.append(n)
        scores.append(P[:, ::-1] if name in swapped else P)
        outcomes.append(Y)
    return ClusteredDataset(np.concatenate(ids), np.concatenate(group_col),
                            np.concatenate(sizes), np.concatenate(scores),
                            np.concatenate(outcomes))
