import csv
import json

import numpy as np
import pytest

from parityaudit.harness import (BASELINE, ExperimentConfig, curve_plot_data, emit_report,
                                 evaluate_scores, run_experiment)
from parityaudit.synth import SynthConfig, generate


@pytest.fixture(scope="module")
def data():
    ds, _ = generate(SynthConfig.two_groups(M=300, activity=1.0, shift2=0.1, seed=8))
    return ds


@pytest.fixture(scope="module")
def result(data):
    cfg = ExperimentConfig(methods=("linear_interp", "platt"), B=4, seed=1)
    return run_experiment(cfg, data, {"source": "synthetic"})


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(methods=("magic",))
    with pytest.raises(ValueError):
        ExperimentConfig(B=1)
    assert ExperimentConfig(methods=("platt",)).all_methods == (BASELINE, "platt")


def test_table_has_baseline_and_methods(result):
    assert result.table.methods == [BASELINE, "linear_interp", "platt"]
    for m in result.table.methods:
        assert result.table[m]["npce"].n == 4
        s = result.table[m]["auc"]
        assert s.lower <= s.mean <= s.upper
    assert "npce" in str(result.table)


def test_baseline_row_scores_raw_data(data):
    from parityaudit.calibration import GroupCalibrator
    out = GroupCalibrator(BASELINE).fit_dataset(data).transform_dataset(data)
    np.testing.assert_array_equal(out.scores, data.scores)
    metrics = evaluate_scores(data, data, ExperimentConfig(B=2))
    assert set(metrics) == {"npce", "parity_error", "auc", "ece"}


def test_runs_are_reproducible(data, result):
    cfg = ExperimentConfig(methods=("linear_interp", "platt"), B=4, seed=1, n_jobs=2)
    again = run_experiment(cfg, data)
    assert again.replicates == result.replicates


def test_too_many_failures_abort():
    from parityaudit.data import ClusteredDataset
    from parityaudit.exceptions import EstimationError
    # Platt cannot fit a group whose outcomes never vary
    ds = ClusteredDataset.from_arrays(np.arange(40), ["a"] * 20 + ["b"] * 20,
                                      np.linspace(0.05, 0.95, 40), [1] * 20 + [0, 1] * 10)
    with pytest.raises(EstimationError):
        run_experiment(ExperimentConfig(methods=("platt",), B=3), ds)


def test_emit_report(tmp_path, data, result):
    curves = curve_plot_data(data, grid=[0.25, 0.5, 0.75])
    assert {r["mode"] for r in curves} == {"user", "aggregate"}
    paths = emit_report(result, str(tmp_path), curves)
    report = json.loads(open(paths["report.json"]).read())
    assert report["config"]["B"] == 4 and len(report["curves"]) == len(curves)
    rows = list(csv.DictReader(open(paths["comparison.csv"])))
    assert len(rows) == 3 * 4
    rows = list(csv.DictReader(open(paths["curves.csv"])))
    assert len(rows) == 2 * 2 * 3
