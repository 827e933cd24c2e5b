import itertools
import math

import numpy as np
import pytest
from scipy import stats as sps

from afrec.evaluation import (
    ConfusionMatrix,
    EvalReport,
    EvaluationError,
    confusion_from,
    metrics,
    paired_bootstrap_test,
    report_to_csv,
    report_to_text,
    roc_auc,
    subgroup_report,
    welch_t_test,
)


def brute_metrics(labels, preds):
    """Per-row recount oracle, independent of the ConfusionMatrix path."""
    tp = sum(1 for y, p in zip(labels, preds) if y == 1 and p == 1)
    fp = sum(1 for y, p in zip(labels, preds) if y == 0 and p == 1)
    tn = sum(1 for y, p in zip(labels, preds) if y == 0 and p == 0)
    fn = sum(1 for y, p in zip(labels, preds) if y == 1 and p == 0)
    total = len(labels)
    acc = (tp + tn) / total
    pre = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * pre * rec / (pre + rec) if (pre + rec) else 0.0
    spe = tn / (tn + fp) if tn + fp else 0.0
    d = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / math.sqrt(d) if d else 0.0
    return acc, pre, rec, f1, spe, mcc


def brute_auc(labels, probs):
    """All-pairs Mann-Whitney count."""
    pos = [p for y, p in zip(labels, probs) if y == 1]
    neg = [p for y, p in zip(labels, probs) if y == 0]
    wins = sum(1.0 if a > b else (0.5 if a == b else 0.0)
               for a in pos for b in neg)
    return wins / (len(pos) * len(neg))


def test_perfect_classifier():
    m = metrics(ConfusionMatrix(tp=10, fp=0, tn=5, fn=0))
    assert (m.acc, m.mcc) == (1.0, 1.0)


def test_all_positive_predictions():
    m = metrics(ConfusionMatrix(tp=6, fp=4, tn=0, fn=0))
    assert m.spe == 0.0 and m.mcc == 0.0  # zero factor convention


def test_worked_example():
    m = metrics(ConfusionMatrix(tp=50, fp=20, tn=30, fn=10))
    assert m.mcc == pytest.approx(1300 / math.sqrt(70 * 60 * 50 * 40))
    assert m.mcc == pytest.approx(0.4485, abs=1e-4)
    assert m.acc == pytest.approx(0.7273, abs=1e-4)


def test_metrics_match_brute_force_random():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        n = int(rng.integers(1, 60))
        labels = rng.integers(0, 2, n)
        preds = rng.integers(0, 2, n)
        m = metrics(confusion_from(labels, preds))
        expected = brute_metrics(labels.tolist(), preds.tolist())
        got = (m.acc, m.pre, m.rec, m.f1, m.spe, m.mcc)
        assert got == pytest.approx(expected, abs=1e-12)


def test_mcc_conventions_exhaustive_small_totals():
    for tp, fp, tn, fn in itertools.product(range(6), repeat=4):
        if tp + fp + tn + fn == 0:
            continue
        m = metrics(ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn))
        denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
        if denom == 0:
            assert m.mcc == 0.0
        assert -1.0 <= m.mcc <= 1.0
        for value in (m.acc, m.pre, m.rec, m.f1, m.spe):
            assert 0.0 <= value <= 1.0


def test_mcc_label_swap_symmetry():
    rng = np.random.default_rng(1)
    for _ in range(300):
        tp, fp, tn, fn = (int(v) for v in rng.integers(0, 30, 4))
        if tp + fp + tn + fn == 0:
            continue
        a = metrics(ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)).mcc
        b = metrics(ConfusionMatrix(tp=tn, fp=fn, tn=tp, fn=fp)).mcc
        assert a == pytest.approx(b, abs=1e-12)


class TestRocAuc:
    def test_perfectly_ranked(self):
        assert roc_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0

    def test_all_ties_half(self):
        assert roc_auc([0, 1, 0, 1], [0.5, 0.5, 0.5, 0.5]) == 0.5

    def test_worked_example(self):
        assert roc_auc([1, 0, 1, 0], [0.9, 0.8, 0.4, 0.1]) == 0.75

    def test_single_class_errors(self):
        with pytest.raises(EvaluationError, match="single class"):
            roc_auc([1, 1], [0.2, 0.3])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            n = int(rng.integers(4, 40))
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                continue
            probs = np.round(rng.random(n), 2)  # induce ties
            assert roc_auc(labels, probs) == pytest.approx(
                brute_auc(labels.tolist(), probs.tolist()), abs=1e-12)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(3)
        labels = rng.integers(0, 2, 50)
        labels[0], labels[1] = 0, 1
        probs = rng.random(50)
        base = roc_auc(labels, probs)
        assert roc_auc(labels, np.exp(probs)) == pytest.approx(base, abs=1e-12)
        assert roc_auc(labels, 1 / (1 + np.exp(-5 * probs))) == pytest.approx(base, abs=1e-12)


class TestPairedBootstrap:
    def test_identical_predictions_p_one(self):
        labels = np.array([0, 1] * 20)
        preds = labels.copy()
        result = paired_bootstrap_test(labels, preds, preds, metric="acc", seed=0)
        assert result.diff == 0.0 and result.p_value == 1.0

    def test_perfect_vs_antiperfect(self):
        labels = np.array([0, 1] * 50)
        result = paired_bootstrap_test(labels, labels, 1 - labels,
                                       metric="acc", seed=0)
        assert result.diff == 1.0 and result.p_value < 0.001

    def test_tiny_sample_modest_difference_not_significant(self):
        labels = np.array([1, 1, 0, 0, 1])
        preds_a = np.array([1, 1, 0, 0, 0])  # 4/5
        preds_b = np.array([1, 0, 0, 0, 1])  # 3/5 (paired overlap)
        result = paired_bootstrap_test(labels, preds_a, preds_b, metric="acc", seed=1)
        assert result.p_value > 0.05

    def test_requires_30_resamples(self):
        labels = np.array([0, 1, 0, 1])
        with pytest.raises(EvaluationError, match="30"):
            paired_bootstrap_test(labels, labels, labels, n_boot=10)

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(4)
        labels = rng.integers(0, 2, 60)
        preds_a = rng.integers(0, 2, 60)
        preds_b = rng.integers(0, 2, 60)
        r1 = paired_bootstrap_test(labels, preds_a, preds_b, metric="mcc", seed=7)
        r2 = paired_bootstrap_test(labels, preds_a, preds_b, metric="mcc", seed=7)
        assert (r1.diff, r1.p_value, r1.t_stat) == (r2.diff, r2.p_value, r2.t_stat)


class TestWelch:
    def test_identical_samples(self):
        result = welch_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert result.t == 0.0 and result.p == pytest.approx(1.0)

    def test_separated_normals(self):
        rng = np.random.default_rng(5)
        a = rng.normal(0, 1, 100)
        b = rng.normal(5, 1, 100)
        assert welch_t_test(a, b).p < 1e-10

    def test_matches_scipy(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            a = rng.normal(0, 1, int(rng.integers(5, 40)))
            b = rng.normal(rng.uniform(-1, 1), 2, int(rng.integers(5, 40)))
            ours = welch_t_test(a, b)
            ref = sps.ttest_ind(a, b, equal_var=False)
            assert ours.t == pytest.approx(ref.statistic, rel=1e-10)
            assert ours.p == pytest.approx(ref.pvalue, rel=1e-10)

    def test_zero_variance_both_errors(self):
        with pytest.raises(EvaluationError, match="zero variance"):
            welch_t_test([1.0, 1.0], [2.0, 2.0])

    def test_small_samples_rejected(self):
        with pytest.raises(EvaluationError, match="at least 2"):
            welch_t_test([1.0], [1.0, 2.0])


class TestSubgroupReport:
    def test_six_row_hand_computation(self):
        labels = [1, 0, 1, 1, 0, 1]
        preds = [1, 0, 0, 1, 1, 1]
        gender = [0, 0, 0, 1, 1, 1]  # 3 male, 3 female
        age = [70, 80, 60, 74, 90, 40]
        report = subgroup_report("sys", labels, preds, gender, age)
        male = report.subgroup("male")
        assert male.n == 3
        assert (male.cm.tp, male.cm.fp, male.cm.tn, male.cm.fn) == (1, 0, 1, 1)
        assert male.metrics.acc == pytest.approx(2 / 3)
        female = report.subgroup("female")
        assert (female.cm.tp, female.cm.fp, female.cm.tn, female.cm.fn) == (2, 1, 0, 0)
        under = report.subgroup("under75")
        assert under.n == 4  # strict <75: ages 70, 60, 74, 40

    def test_overall_row_equals_union(self):
        rng = np.random.default_rng(7)
        labels = rng.integers(0, 2, 40)
        preds = rng.integers(0, 2, 40)
        gender = rng.integers(0, 2, 40)
        age = rng.integers(40, 95, 40)
        report = subgroup_report("sys", labels, preds, gender, age)
        overall = report.subgroup("general")
        assert overall.metrics == metrics(confusion_from(labels, preds))

    def test_empty_subgroup_omitted(self):
        labels = [1, 0, 1]
        preds = [1, 0, 0]
        gender = [0, 0, 0]  # all male
        age = [70, 80, 60]
        report = subgroup_report("sys", labels, preds, gender, age)
        female = report.subgroup("female")
        assert female.n == 0 and female.metrics is None

    def test_auc_attached_when_probabilities_given(self):
        labels = [1, 0, 1, 0]
        preds = [1, 0, 1, 0]
        report = subgroup_report("sys", labels, preds, [0, 0, 1, 1], [50, 60, 70, 80],
                                 probabilities=[0.9, 0.1, 0.8, 0.2])
        assert report.subgroup("general").metrics.auc == 1.0


def test_report_serialization(tmp_path):
    labels = [1, 0, 1, 0]
    preds = [1, 0, 1, 1]
    system = subgroup_report("logistic", labels, preds, [0, 0, 1, 1], [70, 80, 60, 90])
    report = EvalReport(systems=(system,))
    out = tmp_path / "report.csv"
    report_to_csv(report, out, provenance={"seed": 1})
    content = out.read_text(encoding="utf-8")
    assert content.startswith("# seed=1")
    assert "logistic,general,4" in content
    text = report_to_text(report)
    assert "== general (n=4) ==" in text
    assert "logistic" in text
