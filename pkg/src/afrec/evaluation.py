"""Classification metrics, significance tests and demographic subgroup
reports.

Conventions: any zero denominator in precision/recall/specificity/F1 yields
0; a zero factor under the MCC root yields MCC = 0 (a degenerate classifier
scores no better than chance). AUC is the rank-based Mann-Whitney statistic
with ties contributing 0.5.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats as sps


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise EvaluationError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion_from(labels, predictions) -> ConfusionMatrix:
    labels = np.asarray(labels, dtype=int)
    predictions = np.asarray(predictions, dtype=int)
    if labels.shape != predictions.shape:
        raise EvaluationError("labels and predictions must align")
    return ConfusionMatrix(
        tp=int(np.sum((labels == 1) & (predictions == 1))),
        fp=int(np.sum((labels == 0) & (predictions == 1))),
        tn=int(np.sum((labels == 0) & (predictions == 0))),
        fn=int(np.sum((labels == 1) & (predictions == 0))),
    )


@dataclass(frozen=True)
class MetricSet:
    acc: float
    pre: float
    rec: float
    f1: float
    spe: float
    mcc: float
    auc: float | None = None

    def as_dict(self) -> dict:
        out = {"acc": self.acc, "pre": self.pre, "rec": self.rec,
               "f1": self.f1, "spe": self.spe, "mcc": self.mcc}
        if self.auc is not None:
            out["auc"] = self.auc
        return out


def metrics(cm: ConfusionMatrix) -> MetricSet:
    """Accuracy, precision, recall, F1, specificity and MCC from counts."""
    if cm.total == 0:
        raise EvaluationError("empty confusion matrix")
    tp, fp, tn, fn = cm.tp, cm.fp, cm.tn, cm.fn
    acc = (tp + tn) / cm.total
    pre = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * pre * rec / (pre + rec) if pre + rec else 0.0
    spe = tn / (tn + fp) if tn + fp else 0.0
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / math.sqrt(denom) if denom else 0.0
    return MetricSet(acc=acc, pre=pre, rec=rec, f1=f1, spe=spe, mcc=mcc)


def roc_auc(labels, probabilities) -> float:
    """Mann-Whitney AUC via average ranks; ties contribute 0.5."""
    labels = np.asarray(labels, dtype=int)
    probabilities = np.asarray(probabilities, dtype=float)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("roc_auc is undefined with a single class")
    ranks = sps.rankdata(probabilities)
    rank_sum = float(np.sum(ranks[labels == 1]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


_NAMED_METRICS = {
    "acc": lambda y, p: metrics(confusion_from(y, p)).acc,
    "mcc": lambda y, p: metrics(confusion_from(y, p)).mcc,
    "f1": lambda y, p: metrics(confusion_from(y, p)).f1,
}


@dataclass(frozen=True)
class PairedTest:
    diff: float
    p_value: float
    t_stat: float
    n_boot: int


def paired_bootstrap_test(labels, preds_a, preds_b, metric="acc",
                          n_boot: int = 1000, seed: int = 0) -> PairedTest:
    """Paired bootstrap-t significance test between two prediction sets.

    Test rows are resampled with replacement; the metric difference is
    computed on each resample and a two-sided p-value comes from a t
    statistic over the paired differences. This stands in for the source
    protocol's unspecified pairing unit and is labeled as such by the CLI.
    """
    if n_boot < 30:
        raise EvaluationError("n_boot must be at least 30")
    labels = np.asarray(labels, dtype=int)
    preds_a = np.asarray(preds_a, dtype=int)
    preds_b = np.asarray(preds_b, dtype=int)
    if not (labels.shape == preds_a.shape == preds_b.shape):
        raise EvaluationError("predictions must align on the same test rows")
    fn = _NAMED_METRICS[metric] if isinstance(metric, str) else metric
    point_diff = fn(labels, preds_a) - fn(labels, preds_b)
    rng = np.random.default_rng(seed)
    n = len(labels)
    diffs = np.empty(n_boot)
    for i in range(n_boot):
        idx = rng.integers(0, n, n)
        diffs[i] = fn(labels[idx], preds_a[idx]) - fn(labels[idx], preds_b[idx])
    sd = float(np.std(diffs, ddof=1))
    if sd == 0.0:
        t = 0.0
        p = 1.0 if np.allclose(diffs, 0.0) else 0.0
    else:
        t = float(np.mean(diffs) / (sd / math.sqrt(n_boot)))
        p = float(2.0 * sps.t.sf(abs(t), df=n_boot - 1))
    return PairedTest(diff=float(point_diff), p_value=p, t_stat=t, n_boot=n_boot)


@dataclass(frozen=True)
class WelchResult:
    t: float
    p: float
    dof: float


def welch_t_test(sample_a, sample_b) -> WelchResult:
    """Welch unequal-variance t test with Welch-Satterthwaite dof, two-sided."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise EvaluationError("each sample needs at least 2 observations")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        if a.mean() == b.mean():
            return WelchResult(t=0.0, p=1.0, dof=float(len(a) + len(b) - 2))
        raise EvaluationError("zero variance in both samples")
    se2 = va / len(a) + vb / len(b)
    t = float((a.mean() - b.mean()) / math.sqrt(se2))
    dof = se2 ** 2 / (
        (va / len(a)) ** 2 / (len(a) - 1) + (vb / len(b)) ** 2 / (len(b) - 1)
    )
    p = float(2.0 * sps.t.sf(abs(t), df=dof))
    return WelchResult(t=t, p=p, dof=float(dof))


# ---------------------------------------------------------------------------
# Subgroup reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubgroupMetrics:
    name: str
    n: int
    cm: ConfusionMatrix | None
    metrics: MetricSet | None


@dataclass(frozen=True)
class SystemEval:
    system: str
    subgroups: tuple[SubgroupMetrics, ...]

    def subgroup(self, name: str) -> SubgroupMetrics:
        for sg in self.subgroups:
            if sg.name == name:
                return sg
        raise KeyError(name)


@dataclass(frozen=True)
class SignificanceEntry:
    system_a: str
    system_b: str
    metric: str
    diff: float
    p_value: float


@dataclass(frozen=True)
class EvalReport:
    systems: tuple[SystemEval, ...]
    significance: tuple[SignificanceEntry, ...] = ()


#: Subgroup order mirrors the general/male/female then under-75 layout.
SUBGROUP_ORDER = ("general", "male", "female", "under75", "under75_male", "under75_female")


def _subgroup_masks(gender: np.ndarray, age: np.ndarray) -> dict[str, np.ndarray]:
    male = gender == 0
    female = gender == 1
    under = age < 75  # strict
    return {
        "general": np.ones_like(male, dtype=bool),
        "male": male,
        "female": female,
        "under75": under,
        "under75_male": under & male,
        "under75_female": under & female,
    }


def subgroup_report(system: str, labels, predictions, gender, age,
                    probabilities=None) -> SystemEval:
    """Metric set per demographic subgroup plus the overall row.

    An empty subgroup is reported with n=0 and its metrics omitted. AUC is
    attached where probabilities are given and both classes are present.
    """
    labels = np.asarray(labels, dtype=int)
    predictions = np.asarray(predictions, dtype=int)
    gender = np.asarray(gender, dtype=float)
    age = np.asarray(age, dtype=float)
    masks = _subgroup_masks(gender, age)
    subgroups = []
    for name in SUBGROUP_ORDER:
        mask = masks[name]
        n = int(mask.sum())
        if n == 0:
            subgroups.append(SubgroupMetrics(name=name, n=0, cm=None, metrics=None))
            continue
        cm = confusion_from(labels[mask], predictions[mask])
        mset = metrics(cm)
        if probabilities is not None and len(set(labels[mask].tolist())) == 2:
            probs = np.asarray(probabilities, dtype=float)
            mset = MetricSet(auc=roc_auc(labels[mask], probs[mask]), **mset.as_dict())
        subgroups.append(SubgroupMetrics(name=name, n=n, cm=cm, metrics=mset))
    return SystemEval(system=system, subgroups=tuple(subgroups))


_METRIC_COLUMNS = ("acc", "pre", "rec", "f1", "spe", "mcc", "auc")


def report_to_csv(report: EvalReport, path: str | Path,
                  provenance: dict | None = None) -> None:
    """Rows = systems x subgroups, columns = metrics."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if provenance:
            for key in sorted(provenance):
                fh.write(f"# {key}={provenance[key]}\n")
        writer = csv.writer(fh)
        writer.writerow(["system", "subgroup", "n"] + list(_METRIC_COLUMNS))
        for system in report.systems:
            for sg in system.subgroups:
                row = [system.system, sg.name, sg.n]
                if sg.metrics is None:
                    row += [""] * len(_METRIC_COLUMNS)
                else:
                    d = sg.metrics.as_dict()
                    row += [f"{d[m]:.4f}" if m in d else "" for m in _METRIC_COLUMNS]
                writer.writerow(row)
        if report.significance:
            writer.writerow([])
            writer.writerow(["system_a", "system_b", "metric", "diff", "p_value"])
            for entry in report.significance:
                writer.writerow([entry.system_a, entry.system_b, entry.metric,
                                 f"{entry.diff:.4f}", f"{entry.p_value:.4f}"])


def report_to_text(report: EvalReport) -> str:
    """Fixed-width table, one block per subgroup with one row per system."""
    lines = []
    header = f"{'':24s}" + "".join(f"{m.upper():>8s}" for m in _METRIC_COLUMNS)
    by_subgroup: dict[str, list[tuple[str, SubgroupMetrics]]] = {}
    for system in report.systems:
        for sg in system.subgroups:
            by_subgroup.setdefault(sg.name, []).append((system.system, sg))
    for name in SUBGROUP_ORDER:
        if name not in by_subgroup:
            continue
        entries = by_subgroup[name]
        shown = [e for e in entries if e[1].n > 0]
        lines.append(f"== {name} (n={entries[0][1].n}) ==")
        if not shown:
            lines.append("  n=0, metrics omitted")
            lines.append("")
            continue
        lines.append(header)
        for system_name, sg in shown:
            d = sg.metrics.as_dict()
            cells = "".join(
                f"{d[m]:>8.4f}" if m in d else f"{'-':>8s}" for m in _METRIC_COLUMNS
            )
            lines.append(f"{system_name:24s}{cells}")
        lines.append("")
    if report.significance:
        lines.append("== significance (paired bootstrap-t; methodological substitute) ==")
        for entry in report.significance:
            lines.append(
                f"{entry.system_a} vs {entry.system_b} [{entry.metric}]: "
                f"diff={entry.diff:+.4f}, p={entry.p_value:.4f}"
            )
        lines.append("")
    return "\n".join(lines)
