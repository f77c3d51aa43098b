"""Command-line interface.

Exit status is 0 on success, 2 for bad input data and 3 when a statistical
procedure cannot be carried out.
"""
import argparse
import json
import os
import sys

from . import __version__
from .calibration import (METHODS, GroupCalibrator, MultiObjectiveCalibrator,
                          load_calibrator)
from .data import load_csv, parse_schema
from .datasets import DATASETS, load_scored
from .exceptions import DataError, EstimationError
from .harness import ExperimentConfig, curve_plot_data, emit_report, run_experiment
from .marginal import mitigate_marginal
from .parity import (ALTERNATIVES, CORRECTIONS, DEFAULT_PERCENTILES, build_score_grid,
                     marginal_outcome_test, parity_test)
from .synth import SynthConfig, generate

EXIT_DATA, EXIT_PROCEDURE = 2, 3


def _bandwidth(text):
    if text == "auto":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("bandwidth must be 'auto' or a positive number")
    if value <= 0:
        raise argparse.ArgumentTypeError("bandwidth must be positive")
    return value


def _percentiles(text):
    return tuple(float(p) for p in text.split(","))


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--mode", choices=("user", "aggregate"), default="user",
                   help="weight members equally (user) or instances equally (aggregate)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kernel", choices=("gaussian", "epanechnikov"), default="gaussian")
    p.add_argument("--bandwidth", type=_bandwidth, default="auto")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--output", "-o", help="output file (or directory for evaluate)")
    p.add_argument("--schema", help="column mapping, e.g. member_id=uid,group=sex")
    return p


def _load(args):
    schema = parse_schema(args.schema) if args.schema else None
    return load_csv(args.input, schema)


def _two_groups(dataset, groups):
    if groups:
        return groups
    levels = dataset.group_levels
    if len(levels) < 2:
        raise DataError("the data has fewer than two groups")
    return levels[:2]


def _emit(payload, path):
    text = json.dumps(payload, indent=2)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_test(args):
    ds = _load(args)
    g1, g2 = _two_groups(ds, args.groups)
    if args.t_star is not None:
        report = marginal_outcome_test(ds, g1, g2, args.t_star, h=args.bandwidth,
                                       alpha=args.alpha, mode=args.mode, k=args.objective,
                                       kernel=args.kernel, alternative=args.alternative)
        payload = report.to_dict()
        payload["test"] = "marginal_outcome"
        payload["t_star"] = args.t_star
    else:
        grid = build_score_grid(ds, args.percentiles, args.objective)
        report = parity_test(ds, g1, g2, grid, alpha=args.alpha, mode=args.mode,
                             k=args.objective, bandwidth=args.bandwidth, kernel=args.kernel,
                             correction=args.correction, alternative=args.alternative)
        payload = report.to_dict()
        payload["test"] = "predictive_rate_parity"
    _emit(payload, args.output)
    if args.output:
        print(f"{'reject' if report.reject else 'no rejection'} at alpha={args.alpha} "
              f"(min adjusted p = {report.min_p_adj:.4g})")


def cmd_calibrate(args):
    ds = _load(args)
    if args.method == "multi_objective":
        cal = MultiObjectiveCalibrator(bandwidth=args.bandwidth, kernel=args.kernel,
                                       mode=args.mode)
        cal.fit(ds.scores, ds.outcomes, ds.instance_groups, ds.member_ids[ds.member_index])
    else:
        params = {"n_bins": args.bins} if args.method in ("binning", "linear_interp") else None
        if args.method == "linear_interp":
            params.update(bandwidth=args.bandwidth, kernel=args.kernel, mode=args.mode)
        cal = GroupCalibrator(args.method, params).fit_dataset(ds, args.objective)
    _emit(cal.to_dict(), args.output)


def cmd_apply(args):
    ds = _load(args)
    cal = load_calibrator(args.calibrator)
    if isinstance(cal, MultiObjectiveCalibrator):
        out = cal.transform_dataset(ds)
    else:
        out = cal.transform_dataset(ds, args.objective)
    if args.output:
        out.to_csv(args.output)
    else:
        out.to_csv(sys.stdout)


def cmd_evaluate(args):
    if args.dataset:
        ds, info = load_scored(args.dataset)
    elif args.input:
        ds, info = _load(args), {"input": args.input}
    else:
        raise DataError("give an input CSV or --dataset")
    config = ExperimentConfig(methods=tuple(args.methods), B=args.bootstrap, alpha=args.alpha,
                              mode=args.mode, seed=args.seed, percentiles=args.percentiles,
                              bins=args.bins, bandwidth=args.bandwidth, kernel=args.kernel,
                              input=args.input or args.dataset, output_dir=args.output,
                              n_jobs=args.jobs)
    result = run_experiment(config, ds, info)
    print(result.table)
    if args.output:
        curves = curve_plot_data(ds, bandwidth=args.bandwidth, kernel=args.kernel)
        paths = emit_report(result, args.output, curves)
        print("wrote " + ", ".join(paths.values()))


def cmd_marginal(args):
    ds = _load(args)
    g1, g2 = _two_groups(ds, args.groups)
    sol, p1, p2 = mitigate_marginal(ds, g1, g2, args.t_star, window=args.window,
                                    mode=args.mode, k=args.objective,
                                    bandwidth=args.bandwidth, kernel=args.kernel)
    payload = sol.to_dict()
    payload["predictors"] = {g1: p1.to_dict(), g2: p2.to_dict()}
    _emit(payload, args.output)


def cmd_simulate(args):
    if args.preset == "coupling":
        config = SynthConfig.coupling(M=args.members, seed=args.seed)
    else:
        delta = args.shift if args.preset == "shift" else 0.0
        config = SynthConfig.two_groups(M=args.members, activity=args.activity, tau=args.tau,
                                        shift2=delta, seed=args.seed)
    ds, truth = generate(config)
    out = args.output or "synthetic.csv"
    ds.to_csv(out)
    sidecar = os.path.splitext(out)[0] + ".truth.json"
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(truth.to_dict(), fh, indent=2)
    print(f"wrote {out} ({ds.M} members, {ds.N} instances) and {sidecar}")


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(
        prog="parityaudit", description="Predictive rate parity audits for clustered score data.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", parents=[common], help="predictive rate parity test")
    p.add_argument("input")
    p.add_argument("--groups", nargs=2, metavar=("G1", "G2"))
    p.add_argument("--correction", choices=CORRECTIONS, default="bonferroni")
    p.add_argument("--alternative", choices=ALTERNATIVES, default="two-sided")
    p.add_argument("--percentiles", type=_percentiles, default=DEFAULT_PERCENTILES)
    p.add_argument("--t-star", type=float, help="run the marginal outcome test at this threshold")
    p.add_argument("--objective", type=int, default=0, help="score/outcome column index")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("calibrate", parents=[common], help="fit per-group calibrators")
    p.add_argument("input")
    p.add_argument("--method", choices=METHODS[1:] + ("multi_objective",),
                   default="linear_interp")
    p.add_argument("--objective", type=int, default=0)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("apply", parents=[common], help="transform scores with a saved calibrator")
    p.add_argument("input")
    p.add_argument("--calibrator", required=True)
    p.add_argument("--objective", type=int, default=0)
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("evaluate", parents=[common], help="bootstrap calibrator comparison")
    p.add_argument("input", nargs="?")
    p.add_argument("--dataset", choices=DATASETS, help="use a bundled dataset")
    p.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS[1:]))
    p.add_argument("--bootstrap", "-B", type=int, default=200)
    p.add_argument("--percentiles", type=_percentiles, default=DEFAULT_PERCENTILES)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("marginal", parents=[common], help="fair group-specific thresholds")
    p.add_argument("input")
    p.add_argument("--t-star", type=float, required=True)
    p.add_argument("--groups", nargs=2, metavar=("G1", "G2"))
    p.add_argument("--window", type=float)
    p.add_argument("--objective", type=int, default=0)
    p.set_defaults(func=cmd_marginal)

    p = sub.add_parser("simulate", parents=[common], help="generate synthetic data")
    p.add_argument("--preset", choices=("null", "shift", "coupling"), default="null")
    p.add_argument("--members", type=int, default=2000)
    p.add_argument("--activity", type=float, default=3.0)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--shift", type=float, default=0.1)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROCEDURE
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
