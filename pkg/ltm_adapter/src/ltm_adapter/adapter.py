"""External-predictor protocol: consume feature matrices from the AF
recurrence pipeline and return a predictions file its evaluator accepts.

The adapter talks only the documented interchange formats:

* feature matrix CSV, first two columns ``patient_id,date``, remaining
  columns per schema order, missing cells as empty fields, leading ``#``
  comment lines ignored;
* labels CSV with header ``patient_id,label``;
* predictions CSV ``patient_id,probability,prediction`` (threshold 0.5).

Two backends are supported. ``tabpfn`` wraps the pretrained tabular
foundation model when that package is installed; ``hgb`` wraps scikit-learn's
histogram gradient boosting, which also consumes missing values natively.
``auto`` prefers tabpfn and falls back to hgb. No hyperparameter search is
performed in any backend.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class SchemaMismatch(ValueError):
    """Train/test matrices or the labels file disagree with the protocol."""


class ModelUnavailable(RuntimeError):
    """The requested model backend is not installed."""


VARIANTS = ("raw", "pre", "preprocessed")


@dataclass(frozen=True)
class PredictRequest:
    train_matrix: Path
    train_labels: Path
    test_matrix: Path
    output: Path
    variant: str = "raw"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise SchemaMismatch(f"unknown variant {self.variant!r}; expected raw or pre")


def _read_csv(path: Path) -> list[list[str]]:
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found")
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        raise SchemaMismatch(f"{path}: empty file")
    return rows


def load_matrix(path: Path) -> tuple[list[str], list[str], np.ndarray]:
    """Returns (feature column names, patient ids, float matrix with NaN)."""
    rows = _read_csv(path)
    header = rows[0]
    if header[:2] != ["patient_id", "date"]:
        raise SchemaMismatch(f"{path}: matrix must start with patient_id,date")
    columns = header[2:]
    if not columns:
        raise SchemaMismatch(f"{path}: matrix has no feature columns")
    ids = []
    data = np.full((len(rows) - 1, len(columns)), np.nan)
    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise SchemaMismatch(f"{path}: row {i + 2} has {len(row)} fields, "
                                 f"expected {len(header)}")
        ids.append(row[0])
        for j, raw in enumerate(row[2:]):
            if raw != "":
                try:
                    data[i, j] = float(raw)
                except ValueError:
                    raise SchemaMismatch(
                        f"{path}: row {i + 2}, column {columns[j]}: "
                        f"bad value {raw!r}") from None
    return columns, ids, data


def load_labels(path: Path, expected_ids: list[str]) -> np.ndarray:
    rows = _read_csv(path)
    if rows[0][:2] != ["patient_id", "label"]:
        raise SchemaMismatch(f"{path}: labels header must be patient_id,label")
    mapping = {}
    for row in rows[1:]:
        mapping[row[0]] = int(row[1])
    missing = [pid for pid in expected_ids if pid not in mapping]
    if missing:
        raise SchemaMismatch(f"{path}: labels missing for {len(missing)} train "
                             f"rows (first: {missing[0]})")
    return np.array([mapping[pid] for pid in expected_ids], dtype=float)


def _tabpfn_backend(seed: int):
    try:
        from tabpfn import TabPFNClassifier
    except ImportError as exc:
        raise ModelUnavailable("tabpfn is not installed") from exc
    return TabPFNClassifier(random_state=seed)


def _hgb_backend(seed: int):
    try:
        from sklearn.ensemble import HistGradientBoostingClassifier
    except ImportError as exc:
        raise ModelUnavailable("scikit-learn is not installed") from exc
    return HistGradientBoostingClassifier(random_state=seed)


def resolve_backend(name: str, seed: int):
    """Instantiate the requested model; ``auto`` prefers the pretrained
    tabular model and falls back to gradient boosting."""
    if name == "tabpfn":
        return "tabpfn", _tabpfn_backend(seed)
    if name == "hgb":
        return "hgb", _hgb_backend(seed)
    if name == "auto":
        try:
            return "tabpfn", _tabpfn_backend(seed)
        except ModelUnavailable:
            return "hgb", _hgb_backend(seed)
    raise ModelUnavailable(f"unknown backend {name!r}")


def predict(request: PredictRequest, backend: str = "auto", seed: int = 0) -> str:
    """Fit on the train matrix, predict the test matrix, write predictions.

    Missing cells travel as NaN into the model's native missing-value
    handling (the point of the raw variant). The output file is written
    atomically: a failed run leaves no partial file. Returns the backend
    name actually used.
    """
    columns_train, train_ids, X_train = load_matrix(request.train_matrix)
    columns_test, test_ids, X_test = load_matrix(request.test_matrix)
    if columns_train != columns_test:
        raise SchemaMismatch("train and test matrices do not share a schema header")
    y_train = load_labels(request.train_labels, train_ids)
    if len(set(y_train.tolist())) < 2:
        raise SchemaMismatch("train labels are single-class; nothing to fit")

    used, model = resolve_backend(backend, seed)
    model.fit(X_train, y_train)
    probabilities = model.predict_proba(X_test)[:, 1]

    tmp_path = Path(str(request.output) + ".tmp")
    with open(tmp_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "probability", "prediction"])
        for pid, prob in zip(test_ids, probabilities):
            writer.writerow([pid, repr(float(prob)), int(prob >= 0.5)])
    os.replace(tmp_path, request.output)
    return used
