"""Tabular preprocessing: median imputation, standardization, two feature
selectors and missingness-driven undersampling.

Everything is fit on the train split only and applied unchanged to the test
split; no test statistic ever leaks into a fitted parameter. Categorical
columns are ordinal severity grades and travel as plain numeric features.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data_model import ColumnKind, Dataset, SchemaError
from . import models

log = logging.getLogger(__name__)

LASSO_GRID = (0.001, 0.01, 0.1, 1.0, 10.0)


def matrix_of(dataset: Dataset, columns: list[str] | None = None) -> np.ndarray:
    """Rows as a float matrix with NaN for missing cells."""
    names = columns if columns is not None else dataset.schema.names
    X = np.full((len(dataset.rows), len(names)), np.nan)
    for i, row in enumerate(dataset.rows):
        for j, name in enumerate(names):
            value = row.cells.get(name)
            if value is not None:
                X[i, j] = value
    return X


def row_missing_fractions(dataset: Dataset) -> np.ndarray:
    """Fraction of missing cells per row; capture this BEFORE imputation."""
    return np.array(
        [1.0 - len(row.cells) / len(dataset.schema) for row in dataset.rows]
    )


# ---------------------------------------------------------------------------
# Imputation
# ---------------------------------------------------------------------------

def _mode(values: list[float]) -> float:
    counts: dict[float, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return max(counts.items(), key=lambda kv: (kv[1], -kv[0]))[0]


def observed_columns(dataset: Dataset) -> list[str]:
    """Columns with at least one non-missing train-split cell."""
    train_rows = [dataset.rows[i] for i in dataset.split("train")]
    seen: set[str] = set()
    for row in train_rows:
        seen.update(row.cells)
    return [name for name in dataset.schema.names if name in seen]


def impute_median(dataset: Dataset,
                  columns: list[str] | None = None) -> tuple[Dataset, dict[str, float]]:
    """Numeric missing cells get the train median (mean-of-middle on even
    counts); binary/categorical cells get the train mode, ties toward the
    lower value. Raises if a requested column is all-missing on train;
    callers that cannot guarantee coverage pass ``observed_columns()``."""
    train_rows = [dataset.rows[i] for i in dataset.split("train")]
    names = columns if columns is not None else dataset.schema.names
    fitted: dict[str, float] = {}
    for name in names:
        column = dataset.schema.column(name)
        observed = [r.cells[name] for r in train_rows if name in r.cells]
        if not observed:
            raise SchemaError(
                f"column {name!r} has no observed training values to impute from")
        if column.kind is ColumnKind.NUMERIC:
            fitted[name] = float(np.median(observed))
        else:
            fitted[name] = _mode(observed)
    return apply_imputation(dataset, fitted), fitted


def apply_imputation(dataset: Dataset, fitted: dict[str, float]) -> Dataset:
    rows = []
    for row in dataset.rows:
        cells = dict(row.cells)
        for name, value in fitted.items():
            cells.setdefault(name, value)
        rows.append(replace(row, cells=cells))
    return replace(dataset, rows=tuple(rows))


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------

def standardize(dataset: Dataset) -> tuple[Dataset, dict[str, tuple[float, float]]]:
    """Zero-mean unit-variance transform of numeric columns, train-fitted
    (population sd). Constant columns map to all zeros."""
    train_rows = [dataset.rows[i] for i in dataset.split("train")]
    fitted: dict[str, tuple[float, float]] = {}
    for column in dataset.schema.columns:
        if column.kind is not ColumnKind.NUMERIC:
            continue
        values = np.array([r.cells[column.name] for r in train_rows
                           if column.name in r.cells])
        if len(values) == 0:
            continue
        fitted[column.name] = (float(values.mean()), float(values.std()))
    return apply_standardization(dataset, fitted), fitted


def apply_standardization(dataset: Dataset,
                          fitted: dict[str, tuple[float, float]]) -> Dataset:
    rows = []
    for row in dataset.rows:
        cells = dict(row.cells)
        for name, (mean, sd) in fitted.items():
            if name in cells:
                cells[name] = (cells[name] - mean) / sd if sd > 0 else 0.0
        rows.append(replace(row, cells=cells))
    return replace(dataset, rows=tuple(rows))


# ---------------------------------------------------------------------------
# Feature selection
# ---------------------------------------------------------------------------

def rfe_select(X: np.ndarray, y: np.ndarray, column_names: list[str],
               target_count: int, step: int = 1, params: dict | None = None,
               seed: int = 0) -> list[str]:
    """Recursive feature elimination under a linear SVM estimator.

    Repeatedly fits the hinge-loss linear model and drops the ``step``
    columns with the smallest |coefficient| (ties drop the later
    schema-order column) until ``target_count`` remain.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    if not 1 <= target_count <= d:
        raise SchemaError(f"target_count {target_count} outside 1..{d}")
    fit_params = dict(params or {})
    fit_params.setdefault("seed", seed)
    remaining = list(range(d))
    while len(remaining) > target_count:
        model = models.fit(X[:, remaining], y, kind="hinge", params=fit_params)
        coefs = np.abs(model.weights)
        n_drop = min(step, len(remaining) - target_count)
        order = sorted(range(len(remaining)),
                       key=lambda i: (coefs[i], -remaining[i]))
        dropped = {remaining[i] for i in order[:n_drop]}
        remaining = [c for c in remaining if c not in dropped]
    return [column_names[i] for i in remaining]


def lasso_fit(X: np.ndarray, y: np.ndarray, lam: float,
              iterations: int = 500, tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """L1-penalized least squares by proximal gradient with an unpenalized
    intercept. Deterministic; objective (1/2n)||y - Xw - b||^2 + lam ||w||_1."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    lipschitz = np.linalg.norm(X, 2) ** 2 / n + 1e-12
    w = np.zeros(d)
    b = float(y.mean())
    for _ in range(iterations):
        residual = X @ w + b - y
        grad = X.T @ residual / n
        w_new = w - grad / lipschitz
        w_new = np.sign(w_new) * np.maximum(np.abs(w_new) - lam / lipschitz, 0.0)
        b_new = float(np.mean(y - X @ w_new))
        if np.max(np.abs(w_new - w)) < tol and abs(b_new - b) < tol:
            w, b = w_new, b_new
            break
        w, b = w_new, b_new
    return w, b


def lsfm_select(X: np.ndarray, y: np.ndarray, column_names: list[str],
                keep_fraction: float = 0.25, seed: int = 0,
                grid: tuple = LASSO_GRID, cv_folds: int = 5) -> list[str]:
    """Lasso-then-select: fit an L1 model (strength chosen by k-fold CV over
    a log grid), rank columns by |coefficient| and keep the top
    ceil(keep_fraction * d). All-zero coefficients fall back to the first
    columns in schema order, with a warning."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    d = X.shape[1]
    keep = math.ceil(keep_fraction * d)
    if keep >= d:
        return list(column_names)
    folds = models.stratified_folds(y, cv_folds, seed)
    best_lam, best_mse = None, None
    for lam in grid:
        errors = []
        for val_idx in folds:
            train_idx = np.setdiff1d(np.arange(len(y)), val_idx)
            w, b = lasso_fit(X[train_idx], y[train_idx], lam)
            pred = X[val_idx] @ w + b
            errors.append(float(np.mean((pred - y[val_idx]) ** 2)))
        mse = float(np.mean(errors))
        if best_mse is None or mse < best_mse:
            best_lam, best_mse = lam, mse
    w, _ = lasso_fit(X, y, best_lam)
    coefs = np.abs(w)
    if np.all(coefs == 0.0):
        log.warning("lasso zeroed every coefficient (lam=%s); keeping the first "
                    "%d columns in schema order", best_lam, keep)
        return list(column_names[:keep])
    order = sorted(range(d), key=lambda i: (-coefs[i], i))
    kept = sorted(order[:keep])
    return [column_names[i] for i in kept]


# ---------------------------------------------------------------------------
# Undersampling
# ---------------------------------------------------------------------------

def undersample(dataset: Dataset, original_missingness: np.ndarray) -> Dataset:
    """Drop majority-class rows with the most pre-imputation missingness
    until the classes balance 50-50. Ties drop the later row."""
    labels = np.asarray(dataset.labels)
    n_pos, n_neg = int(np.sum(labels == 1)), int(np.sum(labels == 0))
    if min(n_pos, n_neg) == 0:
        raise SchemaError("cannot undersample: one class is empty")
    if n_pos == n_neg:
        return dataset
    majority = 1 if n_pos > n_neg else 0
    surplus = abs(n_pos - n_neg)
    candidates = [i for i, lab in enumerate(labels) if lab == majority]
    candidates.sort(key=lambda i: (-original_missingness[i], -i))
    drop = set(candidates[:surplus])
    keep = [i for i in range(len(labels)) if i not in drop]
    return Dataset(
        schema=dataset.schema,
        rows=tuple(dataset.rows[i] for i in keep),
        labels=tuple(dataset.labels[i] for i in keep),
        split_tags=tuple(dataset.split_tags[i] for i in keep),
    )


# ---------------------------------------------------------------------------
# Fitted-pipeline artifact
# ---------------------------------------------------------------------------

@dataclass
class FittedPreprocessing:
    """Everything needed to reproduce the transform on new rows."""

    imputation: dict
    scaling: dict          # column -> (mean, sd)
    selected_columns: list[str]
    fs_method: str | None = None

    def apply(self, dataset: Dataset) -> Dataset:
        out = apply_imputation(dataset, self.imputation)
        return apply_standardization(out, {k: tuple(v) for k, v in self.scaling.items()})

    def to_json(self) -> dict:
        return {
            "imputation": {k: repr(v) for k, v in sorted(self.imputation.items())},
            "scaling": {k: [repr(m), repr(s)] for k, (m, s) in sorted(self.scaling.items())},
            "selected_columns": self.selected_columns,
            "fs_method": self.fs_method,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FittedPreprocessing":
        return cls(
            imputation={k: float(v) for k, v in obj["imputation"].items()},
            scaling={k: (float(m), float(s)) for k, (m, s) in obj["scaling"].items()},
            selected_columns=list(obj["selected_columns"]),
            fs_method=obj.get("fs_method"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FittedPreprocessing":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
