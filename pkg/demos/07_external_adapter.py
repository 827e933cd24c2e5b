"""Drive a third-party tabular model through the external-predictor protocol.

The adapter (installed separately from ltm_adapter/) consumes the pipeline's
feature-matrix and labels CSVs unmodified and returns a predictions CSV the
evaluator accepts. Missing cells travel as empty fields in the raw variant.
Requires the `ltm-adapter` console script; the demo explains and exits when
it is absent.
"""

import shutil
import subprocess
import sys
import tempfile
from datetime import date
from pathlib import Path

import numpy as np

from afrec.data_model import FeatureVector, canonical_schema, save_matrix
from afrec.evaluation import roc_auc

if shutil.which("ltm-adapter") is None:
    print("ltm-adapter is not installed; run "
          "`pip install -e ltm_adapter/ --no-build-isolation` first.")
    sys.exit(0)

schema = canonical_schema()
rng = np.random.default_rng(3)


def planted_rows(n, start):
    rows, labels = [], []
    for i in range(n):
        cells = {}
        for column in schema.columns:
            if rng.random() < 0.15:
                continue  # leave a hole: the raw variant must survive missing cells
            if column.kind.value == "binary":
                cells[column.name] = float(rng.integers(0, 2))
            elif column.kind.value == "categorical":
                cells[column.name] = float(rng.integers(0, column.cardinality))
            else:
                cells[column.name] = float(np.round(rng.normal(), 3))
        signal = cells.get("urea", 0.0) + cells.get("creatinine", 0.0)
        labels.append(int(signal > 0))
        rows.append(FeatureVector(f"P{start + i:05d}", date(2020, 1, 1), cells))
    return rows, labels


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    train_rows, train_labels = planted_rows(300, 0)
    test_rows, test_labels = planted_rows(150, 300)
    save_matrix(tmp / "train.csv", schema, train_rows)
    save_matrix(tmp / "test.csv", schema, test_rows)
    (tmp / "labels.csv").write_text(
        "patient_id,label\n" + "".join(
            f"{r.patient_id},{y}\n" for r, y in zip(train_rows, train_labels)),
        encoding="utf-8")

    proc = subprocess.run(
        ["ltm-adapter", "predict", "--train", str(tmp / "train.csv"),
         "--labels", str(tmp / "labels.csv"), "--test", str(tmp / "test.csv"),
         "--out", str(tmp / "pred.csv"), "--variant", "raw"],
        capture_output=True, text=True)
    print(proc.stdout.strip() or proc.stderr.strip())
    if proc.returncode != 0:
        sys.exit(proc.returncode)

    from afrec.pipeline import load_predictions
    predictions = load_predictions(tmp / "pred.csv")
    probs = [predictions[r.patient_id][0] for r in test_rows]
    print(f"planted-signal AUC through the protocol: "
          f"{roc_auc(test_labels, probs):.3f}")
