"""Rebuild the bundled UCI datasets from wheels on PyPI.

The processed Cleveland heart-disease table ships inside the ``orange3``
wheel and the Adult census files ship inside the ``responsibly`` wheel.
Both are UCI datasets distributed under CC BY 4.0.

    pip download --no-deps orange3 responsibly -d /tmp/wheels
    python scripts/vendor_datasets.py /tmp/wheels
"""
import glob
import io
import os
import sys
import zipfile

import pandas as pd

OUT = os.path.join(os.path.dirname(__file__), "..", "src", "parityaudit", "data")

HEART_COLUMNS = [
    "age", "sex", "cp", "trestbps", "chol", "fbs", "restecg", "thalach",
    "exang", "oldpeak", "slope", "ca", "thal", "target",
]
ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num",
    "marital_status", "occupation", "relationship", "race", "sex",
    "capital_gain", "capital_loss", "hours_per_week", "native_country",
    "income",
]


def _member(wheel_dir, pattern, name):
    (path,) = glob.glob(os.path.join(wheel_dir, pattern))
    with zipfile.ZipFile(path) as zf:
        return zf.read(name).decode()


def heart(wheel_dir):
    text = _member(wheel_dir, "orange3-*.whl", "Orange/datasets/heart_disease.tab")
    # Orange .tab: header row, type row, flag row, then data
    body = "\n".join(text.splitlines()[3:])
    df = pd.read_csv(io.StringIO(body), sep="\t", header=None, names=HEART_COLUMNS,
                     na_values=["", "?"])
    df.insert(0, "patient_id", range(1, len(df) + 1))
    return df


def adult(wheel_dir):
    frames = []
    for split in ("data", "test"):
        text = _member(wheel_dir, "responsibly-*.whl",
                       f"responsibly/dataset/adult/adult.{split}")
        df = pd.read_csv(io.StringIO(text), header=None, names=ADULT_COLUMNS,
                         skipinitialspace=True, comment="|", na_values=["?"])
        df["income"] = df["income"].str.rstrip(".")
        df["split"] = "train" if split == "data" else "test"
        frames.append(df)
    return pd.concat(frames, ignore_index=True)


if __name__ == "__main__":
    wheel_dir = sys.argv[1]
    heart(wheel_dir).to_csv(os.path.join(OUT, "heart_disease.csv.gz"), index=False)
    adult(wheel_dir).to_csv(os.path.join(OUT, "adult.csv.gz"), index=False)
