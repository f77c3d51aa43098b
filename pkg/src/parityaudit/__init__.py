"""Clustered predictive rate parity testing and per-group recalibration."""
__version__ = "0.1.0"

from .calibration import (BinningCalibrator, GroupCalibrator, IsotonicCalibrator,
                          LinearInterpCalibrator, MultiObjectiveCalibrator, PlattCalibrator,
                          fit_binning, fit_isotonic, fit_linear_interp, fit_multi_objective,
                          fit_per_group, load_calibrator)
from .data import ClusteredDataset, Member, Observation, bootstrap_resample, load_csv, split
from .estimator import (ClusteredNadarayaWatson, Curve, PointEstimate, estimate_curve,
                        nw_aggregate, nw_multivariate, nw_user_level, nw_variance)
from .exceptions import DataError, EstimationError, ParityAuditError
from .harness import ComparisonTable, ExperimentConfig, emit_report, run_experiment
from .kernels import rule_of_thumb_bandwidth
from .marginal import (OutcomePredictor, empirical_cdf, fit_outcome_predictor,
                       mitigate_marginal, solve_fair_thresholds)
from .metrics import auc, ece, npce, parity_error
from .parity import (ParityTestReport, ScoreGrid, build_score_grid, marginal_outcome_test,
                     ordering_diagnostic, parity_test)
from .synth import GroundTruth, SynthConfig, generate, generate_multi_objective

__all__ = [name for name in dir() if not name.startswith("_")]
