"""Bootstrap comparison of per-group calibrators.

Each replicate resamples members of the scored evaluation set, splits the
resample in half by member, fits every requested calibrator per group on
the first half and scores the transformed second half. Metrics are
summarised by their bootstrap mean and 95% percentile interval; a method is
flagged when its interval does not overlap the baseline's.
"""
import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .calibration import METHODS, GroupCalibrator
from .data import bootstrap_resample, split
from .estimator import _check_mode, estimate_curve
from .exceptions import EstimationError, ParityAuditError
from .metrics import METRICS, auc, ece, npce, parity_error
from .parity import DEFAULT_PERCENTILES, _clean, build_score_grid

BASELINE = "none"
# lower is better for every metric except AUC
HIGHER_IS_BETTER = {"auc"}


@dataclass(frozen=True)
class ExperimentConfig:
    methods: Tuple[str, ...] = ("linear_interp",)
    B: int = 200
    alpha: float = 0.05
    mode: str = "user"
    seed: int = 0
    percentiles: Tuple[float, ...] = DEFAULT_PERCENTILES
    bins: int = 10
    ece_bins: int = 10
    bandwidth: object = "auto"
    kernel: str = "gaussian"
    k: int = 0
    input: Optional[str] = None
    output_dir: Optional[str] = None
    max_failure_rate: float = 0.1
    n_jobs: int = 1

    def __post_init__(self):
        methods = tuple(self.methods)
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "percentiles", tuple(self.percentiles))
        if not methods:
            raise ValueError("at least one method is required")
        bad = [m for m in methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        if self.B < 2:
            raise ValueError("B must be >= 2")
        _check_mode(self.mode)

    @property
    def all_methods(self):
        """Baseline first, then the requested methods."""
        return (BASELINE,) + tuple(m for m in self.methods if m != BASELINE)

    def method_params(self, method):
        if method in ("binning", "linear_interp"):
            return {"n_bins": self.bins}
        return None


@dataclass
class MetricSummary:
    mean: float
    lower: float
    upper: float
    n: int
    significant: bool = False

    @property
    def ci(self):
        return (self.lower, self.upper)


@dataclass
class ComparisonTable:
    rows: Dict[str, Dict[str, MetricSummary]]
    alpha: float = 0.05
    baseline: str = BASELINE

    @property
    def methods(self):
        return list(self.rows)

    def __getitem__(self, method):
        return self.rows[method]

    def to_dict(self):
        return {m: {k: asdict(v) for k, v in r.items()} for m, r in self.rows.items()}

    def to_records(self):
        return [{"method": m, "metric": k, "mean": v.mean, "ci_lower": v.lower,
                 "ci_upper": v.upper, "n_replicates": v.n, "significant": v.significant}
                for m, r in self.rows.items() for k, v in r.items()]

    def __str__(self):
        lines = [f"{'method':<14}" + "".join(f"{k:>28}" for k in METRICS)]
        for m, r in self.rows.items():
            cells = []
            for k in METRICS:
                v = r[k]
                star = "*" if v.significant else " "
                cells.append(f"{v.mean:>9.5f}{star} [{v.lower:.5f}, {v.upper:.5f}]")
            lines.append(f"{m:<14}" + "".join(f"{c:>28}" for c in cells))
        return "\n".join(lines)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    table: ComparisonTable
    replicates: Dict[str, Dict[str, List[float]]]
    failures: Dict[str, List[Tuple[int, str]]]
    info: dict = field(default_factory=dict)

    def to_dict(self):
        cfg = asdict(self.config)
        return _clean({"config": cfg, "table": self.table.to_dict(),
                       "replicates": self.replicates,
                       "failures": {m: [list(f) for f in fs] for m, fs in self.failures.items()},
                       "info": self.info,
                       "significance_rule": "95% percentile intervals do not overlap the "
                                            "baseline's",
                       "parity_error_convention": "ordered group pairs"})


def evaluate_scores(train, test, config):
    """All four metrics of ``test``; the NPCE/parity grid comes from ``train``."""
    grid = build_score_grid(train, config.percentiles, config.k)
    kw = dict(mode=config.mode, k=config.k, bandwidth=config.bandwidth, kernel=config.kernel)
    return {"npce": npce(test, grid, **kw), "parity_error": parity_error(test, grid, **kw),
            "auc": auc(test, k=config.k), "ece": ece(test, config.ece_bins, config.k)}


def _replicate(dataset, config, seq):
    boot_seed, split_seed = seq.spawn(2)
    boot = bootstrap_resample(dataset, seed=boot_seed)
    cal_train, cal_test = split(boot, 0.5, seed=split_seed)
    out = {}
    for method in config.all_methods:
        try:
            cal = GroupCalibrator(method, config.method_params(method))
            cal.fit_dataset(cal_train, config.k)
            out[method] = evaluate_scores(cal.transform_dataset(cal_train, config.k),
                                          cal.transform_dataset(cal_test, config.k), config)
        except (ParityAuditError, ValueError, np.linalg.LinAlgError) as exc:
            out[method] = exc
    return out


def _summarise(values, level=0.95):
    v = np.asarray(values, dtype=float)
    lo, hi = np.percentile(v, [50 * (1 - level), 50 * (1 + level)])
    return MetricSummary(float(v.mean()), float(lo), float(hi), len(v))


def run_experiment(config, dataset, info=None):
    """Run the bootstrap comparison on a scored dataset."""
    if len(dataset.group_levels) < 2:
        raise EstimationError("the comparison needs at least two groups")
    seqs = np.random.SeedSequence(config.seed).spawn(config.B)
    if config.n_jobs > 1:
        with ThreadPoolExecutor(config.n_jobs) as pool:
            results = list(pool.map(lambda s: _replicate(dataset, config, s), seqs))
    else:
        results = [_replicate(dataset, config, s) for s in seqs]
    replicates = {m: {k: [] for k in METRICS} for m in config.all_methods}
    failures = {m: [] for m in config.all_methods}
    for b, res in enumerate(results):
        for m, val in res.items():
            if isinstance(val, Exception):
                failures[m].append((b, f"{type(val).__name__}: {val}"))
                continue
            for k in METRICS:
                replicates[m][k].append(val[k])
    for m, fs in failures.items():
        if len(fs) > config.max_failure_rate * config.B:
            raise EstimationError(f"method {m!r} failed in {len(fs)} of {config.B} "
                                  f"replicates; first error: {fs[0][1]}")
    rows = {m: {k: _summarise(replicates[m][k]) for k in METRICS} for m in config.all_methods}
    base = rows[BASELINE]
    for m in config.all_methods:
        if m == BASELINE:
            continue
        for k in METRICS:
            r, b0 = rows[m][k], base[k]
            r.significant = r.lower > b0.upper or r.upper < b0.lower
    table = ComparisonTable(rows, config.alpha)
    return ExperimentResult(config, table, replicates, failures, dict(info or {}))


def curve_plot_data(dataset, grid=None, modes=("user", "aggregate"), level=0.95, k=0,
                    bandwidth="auto", kernel="gaussian"):
    """Per-group calibration curves with pointwise intervals, as flat records."""
    if grid is None:
        grid = build_score_grid(dataset, k=k)
    records = []
    for mode in modes:
        for g in dataset.group_levels:
            c = estimate_curve(dataset, g, grid, mode=mode, k=k, bandwidth=bandwidth,
                               kernel=kernel, allow_missing=True)
            lo, hi = c.interval(level)
            for j, s in enumerate(c.grid):
                records.append({"mode": mode, "group": g, "s": float(s),
                                "estimate": float(c.values[j]),
                                "std_error": float(c.std_errors[j]),
                                "lower": float(lo[j]), "upper": float(hi[j]),
                                "m_effective": float(c.m_effective[j])})
    return records


CURVE_FIELDS = ("mode", "group", "s", "estimate", "std_error", "lower", "upper",
                "m_effective")


def _write_csv(path, records, fieldnames):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(records)


def emit_report(result, out_dir, curves=None):
    """Write ``report.json``, ``comparison.csv`` and ``curves.csv``.

    ``curves`` are records from :func:`curve_plot_data`; returns the paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name)
             for name in ("report.json", "comparison.csv", "curves.csv")}
    payload = result.to_dict()
    payload["curves"] = _clean(curves or [])
    with open(paths["report.json"], "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    records = result.table.to_records()
    _write_csv(paths["comparison.csv"], records, list(records[0]))
    _write_csv(paths["curves.csv"], curves or [], CURVE_FIELDS)
    return paths
