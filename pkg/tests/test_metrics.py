import json
import math

import numpy as np
import pytest

from tcnads.detect import DecisionTree
from tcnads.errors import UndefinedMetricError
from tcnads.metrics import (
    ConfusionCounts,
    MetricsReport,
    accuracy,
    confusion,
    fnr,
    fpr,
    mcc,
    overhead_report,
    roc_auc,
    tpr,
    write_metrics_csv,
    write_metrics_json,
    write_roc_csv,
)
from tcnads.tcna import TcnaConfig, TcnaModel, parameter_count


def brute_counts(labels, preds):
    tp = tn = fp = fn = 0
    for y, p in zip(labels, preds):
        if y and p:
            tp += 1
        elif y:
            fn += 1
        elif p:
            fp += 1
        else:
            tn += 1
    return tp, tn, fp, fn


def brute_mcc(tp, tn, fp, fn):
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    return 0.0 if den == 0 else (tp * tn - fp * fn) / math.sqrt(den)


def brute_auc(labels, scores):
    """Probability a random positive outranks a random negative, ties half."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_counts_and_ratios_match_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        y = rng.integers(0, 2, size=n)
        p = rng.integers(0, 2, size=n)
        tp, tn, fp, fn = brute_counts(y, p)
        c = confusion(y, p)
        assert (c.tp, c.tn, c.fp, c.fn) == (tp, tn, fp, fn)
        assert accuracy(c) == pytest.approx((tp + tn) / n, abs=1e-12)
        if tp + fn:
            assert fnr(c) == pytest.approx(fn / (tp + fn), abs=1e-12)
        assert mcc(c) == pytest.approx(brute_mcc(tp, tn, fp, fn), abs=1e-12)


def test_auc_matches_rank_statistic():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(2, 30))
        y = rng.integers(0, 2, size=n)
        y[0], y[1] = 0, 1
        s = rng.integers(0, 6, size=n) / 5.0  # coarse grid forces ties
        assert roc_auc(y, s)[1] == pytest.approx(brute_auc(y, s), abs=1e-12)


class TestAucExamples:
    def test_perfect(self):
        assert roc_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9])[1] == 1.0

    def test_constant_scores(self):
        assert roc_auc([0, 1, 0, 1], [0.5, 0.5, 0.5, 0.5])[1] == 0.5

    def test_three_quarters(self):
        assert roc_auc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8])[1] == 0.75

    def test_inverted(self):
        assert roc_auc([0, 0, 1, 1], [0.9, 0.8, 0.2, 0.1])[1] == 0.0

    def test_curve_endpoints_and_monotone(self):
        points, _ = roc_auc([0, 1, 0, 1, 1], [0.3, 0.3, 0.1, 0.9, 0.5])
        assert (points[0].fpr, points[0].tpr) == (0.0, 0.0)
        assert (points[-1].fpr, points[-1].tpr) == (1.0, 1.0)
        assert all(a.fpr <= b.fpr and a.tpr <= b.tpr for a, b in zip(points, points[1:]))

    def test_single_class_undefined(self):
        with pytest.raises(UndefinedMetricError):
            roc_auc([1, 1], [0.2, 0.3])


class TestMcc:
    def test_worked_example(self):
        # 90 tp, 5 fp, 10 fn, 895 tn
        expected = (90 * 895 - 5 * 10) / math.sqrt(95 * 100 * 900 * 905)
        assert mcc(ConfusionCounts(tp=90, tn=895, fp=5, fn=10)) == pytest.approx(expected, abs=1e-12)

    def test_perfect_and_inverse(self):
        assert mcc(ConfusionCounts(tp=3, tn=7)) == 1.0
        assert mcc(ConfusionCounts(fp=7, fn=3)) == -1.0

    def test_degenerate_is_zero(self):
        assert mcc(ConfusionCounts(tp=0, tn=10)) == 0.0

    def test_label_swap_symmetry(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            y, p = rng.integers(0, 2, 30), rng.integers(0, 2, 30)
            assert mcc(confusion(y, p)) == pytest.approx(mcc(confusion(1 - y, 1 - p)), abs=1e-12)


class TestRates:
    def test_values(self):
        c = ConfusionCounts(tp=3, tn=4, fp=1, fn=2)
        assert (tpr(c), fnr(c), fpr(c)) == (0.6, 0.4, 0.2)

    def test_undefined(self):
        with pytest.raises(UndefinedMetricError):
            fnr(ConfusionCounts(tn=5))
        with pytest.raises(UndefinedMetricError):
            accuracy(ConfusionCounts())

    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            confusion([0, 2], [0, 1])


class TestReport:
    def test_undefined_becomes_note(self):
        rep = MetricsReport.from_predictions([0, 0, 0], [0, 1, 0], [0.1, 0.9, 0.2])
        assert rep.fnr is None and rep.roc_auc is None and rep.notes
        assert rep.accuracy == pytest.approx(2 / 3)

    def test_writers(self, tmp_path):
        rep = MetricsReport.from_predictions([0, 1, 1, 0], [0, 1, 0, 0], [0.1, 0.9, 0.4, 0.3])
        write_metrics_json(rep, tmp_path / "m.json")
        write_metrics_csv(rep, tmp_path / "m.csv")
        doc = json.loads((tmp_path / "m.json").read_text())
        assert doc["counts"] == {"tp": 1, "tn": 2, "fp": 0, "fn": 1}
        assert doc["roc_auc"] == 1.0
        lines = (tmp_path / "m.csv").read_text().splitlines()
        assert lines[0] == "scenario,metric,value" and "all,accuracy,0.75" in lines

    def test_roc_csv(self, tmp_path):
        points, _ = roc_auc([0, 1], [0.2, 0.7])
        write_roc_csv(points, tmp_path / "roc.csv")
        rows = (tmp_path / "roc.csv").read_text().splitlines()
        assert rows[0] == "threshold,fpr,tpr" and rows[1] == "inf,0.0,0.0" and rows[-1] == "-inf,1.0,1.0"


@pytest.mark.parametrize("m", [1, 2, 4])
def test_overhead_report(m):
    model = TcnaModel.initialize(TcnaConfig(m=m), seed=0)
    tree = DecisionTree.fit(np.array([[0.0] * m, [1.0] * m]), np.array([0, 1]))
    window = np.random.default_rng(m).uniform(size=(64, m))
    rep = overhead_report(model, tree, window, np.zeros(m), samples=50, warmup=5)
    enumerated = sum(v.size for v in model.params.values())
    assert rep.parameter_count == parameter_count(model) == enumerated
    assert rep.latency_us_min <= rep.latency_us_median <= rep.latency_us_p99
    assert rep.latency_us_min > 0 and rep.samples == 50
    assert rep.serialized_bytes > 0
