"""Bundled public datasets, scored by the logistic baseline.

Heart Disease (Cleveland, 303 patients, group = sex) and Adult census
income (group = race, restricted to Black and White). Every row is its own
member, so user-level and aggregate weighting coincide.
"""
from importlib import resources

import numpy as np
import pandas as pd

from .data import ClusteredDataset
from .metrics import auc_score
from .scorer import fit_baseline_scorer

DATASETS = ("heart", "adult")


def _read(name):
    with resources.files("parityaudit").joinpath("data", name).open("rb") as fh:
        return pd.read_csv(fh, compression="gzip")


def load_heart_frame():
    """Heart Disease table with ``ca``/``thal`` gaps filled by the mode."""
    df = _read("heart_disease.csv.gz")
    for col in ("ca", "thal"):
        df[col] = df[col].fillna(df[col].mode().iloc[0])
    return df


def load_adult_frame():
    """Adult table with missing categoricals as their own level and a 0/1
    ``income`` target."""
    df = _read("adult.csv.gz")
    for col in ("workclass", "occupation", "native_country"):
        df[col] = df[col].fillna("missing")
    df["income"] = (df["income"].str.strip() == ">50K").astype(int)
    return df


def _to_dataset(frame, scores, id_col, group_col, target):
    return ClusteredDataset.from_arrays(frame[id_col].astype(str).to_numpy(),
                                        frame[group_col].to_numpy(), scores,
                                        frame[target].to_numpy(float))


def scored_heart(test_fraction=0.5, seed=0, l2=1.0):
    """Scorer fit on a random part of the patients; returns the scored rest
    as ``(ClusteredDataset, info)``."""
    df = load_heart_frame()
    rng = np.random.default_rng(seed)
    test = rng.random(len(df)) < test_fraction
    scorer = fit_baseline_scorer(df[~test], "target", exclude=("patient_id", "sex"), l2=l2)
    held = df[test].reset_index(drop=True)
    scores = scorer.score(held)
    info = {"dataset": "heart", "group": "sex", "n_train": int((~test).sum()),
            "n_test": int(test.sum()), "test_auc": auc_score(scores, held["target"])}
    return _to_dataset(held, scores, "patient_id", "sex", "target"), info


def scored_adult(groups=("White", "Black"), l2=1.0):
    """Scorer fit on the official training split (race excluded); returns the
    scored test split restricted to ``groups``."""
    df = load_adult_frame()
    df["row_id"] = np.arange(len(df))
    train = df[df["split"] == "train"]
    scorer = fit_baseline_scorer(train, "income", exclude=("row_id", "race", "split"), l2=l2)
    test = df[(df["split"] == "test") & df["race"].isin(groups)].reset_index(drop=True)
    scores = scorer.score(test)
    info = {"dataset": "adult", "group": "race", "n_train": int(len(train)),
            "n_test": int(len(test)), "test_auc": auc_score(scores, test["income"])}
    return _to_dataset(test, scores, "row_id", "race", "income"), info


def load_scored(name, **kwargs):
    if name == "heart":
        return scored_heart(**kwargs)
    if name == "adult":
        return scored_adult(**kwargs)
    raise ValueError(f"unknown dataset {name!r}; choose from {DATASETS}")
