"""First-party linear classifiers: L2-regularized logistic regression and a
linear SVM trained on the hinge loss, both fit by deterministic seeded
minibatch SGD, plus stratified 5-fold cross-validation with grid search.

Rows are plain float matrices (one row per patient, columns in schema
order); the caller owns imputation and scaling. Same seed on one platform
=> bit-identical weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluation import confusion_from, metrics

KINDS = ("logistic", "hinge")

DEFAULT_PARAMS = {
    "regularization": 0.01,
    "learning_rate": 0.1,
    "epochs": 200,
    "batch_size": 32,
    "seed": 0,
}

#: Grid used when the caller does not supply one.
DEFAULT_GRID = [{"regularization": c} for c in (0.01, 0.1, 1.0, 10.0)]


class ModelError(ValueError):
    pass


@dataclass
class LinearModel:
    kind: str
    weights: np.ndarray
    bias: float
    params: dict
    calibration: tuple[float, float] | None = None  # (a, b) for hinge scores
    columns: list[str] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}")
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.bias):
            raise ModelError("model weights must be finite")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "weights": [repr(w) for w in self.weights.tolist()],
            "bias": repr(self.bias),
            "params": self.params,
            "calibration": None if self.calibration is None
            else [repr(self.calibration[0]), repr(self.calibration[1])],
            "columns": self.columns,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LinearModel":
        calibration = obj.get("calibration")
        return cls(
            kind=obj["kind"],
            weights=np.array([float(w) for w in obj["weights"]], dtype=float),
            bias=float(obj["bias"]),
            params=obj.get("params", {}),
            calibration=None if calibration is None
            else (float(calibration[0]), float(calibration[1])),
            columns=obj.get("columns"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LinearModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def loss_and_grad(kind: str, w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray,
                  regularization: float) -> tuple[float, np.ndarray, float]:
    """Objective value and analytic gradient on a batch; labels in {0, 1}.

    logistic: mean softplus(-s z) + reg/2 ||w||^2, s = 2y - 1, z = Xw + b
    hinge:    mean max(0, 1 - s z) + reg/2 ||w||^2
    """
    s = 2.0 * y - 1.0
    z = X @ w + b
    n = X.shape[0]
    if kind == "logistic":
        loss = float(np.mean(_softplus(-s * z)) + 0.5 * regularization * w @ w)
        dz = -s * _sigmoid(-s * z) / n
    elif kind == "hinge":
        margin = 1.0 - s * z
        loss = float(np.mean(np.maximum(margin, 0.0)) + 0.5 * regularization * w @ w)
        dz = np.where(margin > 0.0, -s, 0.0) / n
    else:
        raise ModelError(f"unknown model kind {kind!r}")
    grad_w = X.T @ dz + regularization * w
    grad_b = float(np.sum(dz))
    return loss, grad_w, grad_b


def fit(X: np.ndarray, y: np.ndarray, kind: str = "logistic",
        params: dict | None = None, columns: list[str] | None = None) -> LinearModel:
    """Minimize the chosen objective by seeded minibatch SGD.

    Learning rate decays as lr0 / (1 + epoch). Raises if the loss goes
    non-finite, reporting the epoch.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if set(np.unique(y)) - {0.0, 1.0}:
        raise ModelError("labels must be binary 0/1")
    p = dict(DEFAULT_PARAMS)
    p.update(params or {})
    rng = np.random.default_rng(p["seed"])
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    batch = max(1, min(int(p["batch_size"]), n))
    for epoch in range(int(p["epochs"])):
        lr = p["learning_rate"] / (1.0 + epoch)
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            loss, gw, gb = loss_and_grad(kind, w, b, X[idx], y[idx], p["regularization"])
            if not np.isfinite(loss):
                raise ModelError(f"non-finite loss at epoch {epoch}")
            w = w - lr * gw
            b = b - lr * gb
    model = LinearModel(kind=kind, weights=w, bias=b, params=p, columns=columns)
    if kind == "hinge":
        model.calibration = _fit_platt(X @ w + b, y)
    return model


def _fit_platt(scores: np.ndarray, y: np.ndarray, iterations: int = 100) -> tuple[float, float]:
    """Logistic link sigma(a*score + b) fitted on train decision values by
    full-batch Newton steps (deterministic)."""
    a, b = 1.0, 0.0
    n = len(scores)
    for _ in range(iterations):
        z = a * scores + b
        p = _sigmoid(z)
        r = p - y
        ga = float(scores @ r) / n
        gb = float(np.sum(r)) / n
        wgt = p * (1.0 - p)
        haa = float((scores * scores) @ wgt) / n + 1e-12
        hab = float(scores @ wgt) / n
        hbb = float(np.sum(wgt)) / n + 1e-12
        det = haa * hbb - hab * hab
        if abs(det) < 1e-18:
            break
        da = (hbb * ga - hab * gb) / det
        db = (haa * gb - hab * ga) / det
        a, b = a - da, b - db
        if max(abs(da), abs(db)) < 1e-10:
            break
    return float(a), float(b)


def predict_proba(model: LinearModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[1] != len(model.weights):
        raise ModelError(
            f"row width {X.shape[1]} does not match model width {len(model.weights)}")
    z = X @ model.weights + model.bias
    if model.kind == "hinge":
        a, b = model.calibration if model.calibration is not None else (1.0, 0.0)
        z = a * z + b
    return _sigmoid(z)


def predict(model: LinearModel, X: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    return (predict_proba(model, X) >= threshold).astype(int)


# ---------------------------------------------------------------------------
# Cross-validation and grid search
# ---------------------------------------------------------------------------

@dataclass
class CVResult:
    fold_metrics: list[dict]       # one {grid_index, fold, acc, mcc} per evaluation
    summary: list[dict]            # one {grid_index, params, mean_mcc, sd_mcc, mean_acc} per point
    best_params: dict
    best_index: int
    model: LinearModel


def stratified_folds(y: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Deterministic stratified folds: per-class shuffle, round-robin deal."""
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if len(idx) < k:
            raise ModelError(
                f"class {cls} has only {len(idx)} rows; use fewer than {k} folds")
        idx = idx[rng.permutation(len(idx))]
        for i, row in enumerate(idx):
            folds[i % k].append(int(row))
    return [np.array(sorted(f)) for f in folds]


def cross_validate(X: np.ndarray, y: np.ndarray, kind: str,
                   grid: list[dict] | None = None, k: int = 5, seed: int = 0,
                   base_params: dict | None = None,
                   columns: list[str] | None = None) -> CVResult:
    """Stratified k-fold grid search; best point by mean MCC, ties toward
    higher mean accuracy then grid order; refits the winner on all rows."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    grid = grid if grid is not None else DEFAULT_GRID
    if not grid:
        raise ModelError("grid must be non-empty")
    folds = stratified_folds(y, k, seed)
    fold_metrics = []
    summary = []
    for gi, point in enumerate(grid):
        params = dict(base_params or {})
        params.update(point)
        params.setdefault("seed", seed)
        accs, mccs = [], []
        for fi, val_idx in enumerate(folds):
            train_idx = np.setdiff1d(np.arange(len(y)), val_idx)
            model = fit(X[train_idx], y[train_idx], kind=kind, params=params)
            preds = predict(model, X[val_idx])
            m = metrics(confusion_from(y[val_idx].astype(int), preds))
            accs.append(m.acc)
            mccs.append(m.mcc)
            fold_metrics.append({"grid_index": gi, "fold": fi, "acc": m.acc, "mcc": m.mcc})
        summary.append({
            "grid_index": gi,
            "params": params,
            "mean_mcc": float(np.mean(mccs)),
            "sd_mcc": float(np.std(mccs)),
            "mean_acc": float(np.mean(accs)),
            "sd_acc": float(np.std(accs)),
        })
    best = max(summary, key=lambda s: (s["mean_mcc"], s["mean_acc"], -s["grid_index"]))
    best_params = best["params"]
    model = fit(X, y, kind=kind, params=best_params, columns=columns)
    return CVResult(fold_metrics=fold_metrics, summary=summary,
                    best_params=best_params, best_index=best["grid_index"], model=model)
