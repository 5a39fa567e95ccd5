"""Metric oracle tests: definitions recomputed by brute force with exact
rational arithmetic, AUC by exhaustive pair counting."""
from fractions import Fraction

import numpy as np
import pytest

from fibnet.metrics import (aggregate, build_report, class_metrics, confusion,
                            roc_auc_ovr, write_confusion_csv, write_report_csv)


def brute_class_metrics(true, pred, k):
    """Per-class metric fractions recomputed from raw label pairs."""
    out = {}
    n = len(true)
    for c in range(k):
        tp = sum(1 for t, p in zip(true, pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(true, pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(true, pred) if t == c and p != c)
        tn = n - tp - fp - fn
        prec = Fraction(tp, tp + fp) if tp + fp else None
        rec = Fraction(tp, tp + fn) if tp + fn else None
        f1 = None
        if prec is not None and rec is not None and prec + rec:
            f1 = 2 * prec * rec / (prec + rec)
        elif prec is not None and rec is not None:
            f1 = None  # 0/0
        spec = Fraction(tn, tn + fp) if tn + fp else None
        out[c] = dict(precision=prec, recall=rec, f1=f1, specificity=spec,
                      support=tp + fn)
    return out


def brute_auc(scores, true, c):
    pos = [s for s, t in zip(scores, true) if t == c]
    neg = [s for s, t in zip(scores, true) if t != c]
    if not pos or not neg:
        return None
    total = Fraction(0)
    for p in pos:
        for q in neg:
            if p > q:
                total += 1
            elif p == q:
                total += Fraction(1, 2)
    return total / (len(pos) * len(neg))


class TestConfusion:
    def test_perfect_predictions_diagonal(self):
        cm = confusion([0, 1, 2, 2], [0, 1, 2, 2], 3)
        assert np.array_equal(cm, np.diag([1, 1, 2]))

    def test_counted_example(self):
        true = [0] * 8 + [0, 0] + [1] + [1] * 9
        pred = [0] * 8 + [1, 1] + [0] + [1] * 9
        assert np.array_equal(confusion(true, pred, 2), [[8, 2], [1, 9]])

    def test_empty_input(self):
        assert not confusion([], [], 3).any()

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            confusion([0, 3], [0, 1], 3)


class TestClassMetrics:
    def test_worked_two_class_example(self):
        # class 0 one-vs-rest: TP=8, FP=1, FN=2, TN=9
        pc = class_metrics(np.array([[8, 2], [1, 9]]))
        assert np.isclose(pc.precision[0], 8 / 9)
        assert np.isclose(pc.recall[0], 0.8)
        assert np.isclose(pc.f1[0], 2 * (8 / 9) * 0.8 / (8 / 9 + 0.8))
        assert np.isclose(pc.f1[0], 0.8421052631578948)
        assert np.isclose(pc.specificity[0], 9 / 10)

    def test_diagonal_is_all_ones(self):
        pc = class_metrics(np.diag([3, 1, 7]))
        for arr in (pc.precision, pc.recall, pc.f1, pc.specificity):
            assert np.allclose(arr, 1.0)

    def test_zero_support_class_flagged(self):
        cm = np.array([[5, 0, 0], [0, 4, 0], [0, 0, 0]])
        pc = class_metrics(cm)
        assert pc.recall[2] == 0.0
        assert (2, "recall") in pc.zero_division_flags
        # macro mean excludes the zero-support class
        assert aggregate(pc.recall, pc.support, "macro") == 1.0


class TestAggregate:
    def test_equal_supports_collapse(self):
        v = np.array([0.7, 0.9])
        s = np.array([10, 10])
        assert aggregate(v, s, "weighted") == aggregate(v, s, "macro")

    def test_weighted_vs_macro_on_imbalance(self):
        v = np.array([1.0, 0.0])
        s = np.array([90, 10])
        assert np.isclose(aggregate(v, s, "weighted"), 0.9)
        assert np.isclose(aggregate(v, s, "macro"), 0.5)

    def test_single_class(self):
        assert aggregate(np.array([0.42]), np.array([7]), "weighted") == 0.42
        assert aggregate(np.array([0.42]), np.array([7]), "macro") == 0.42


class TestAuc:
    def _probs(self, col):
        col = np.asarray(col, dtype=np.float64)
        return np.stack([col, 1.0 - col], axis=1)

    def test_perfect_separation(self):
        scores = self._probs([0.9, 0.8, 0.2, 0.1])
        aucs, _, _ = roc_auc_ovr(scores, np.array([0, 0, 1, 1]))
        assert aucs[0] == 1.0

    def test_all_ties_give_half(self):
        scores = self._probs([0.5, 0.5, 0.5, 0.5])
        aucs, _, _ = roc_auc_ovr(scores, np.array([0, 0, 1, 1]))
        assert aucs[0] == 0.5

    def test_pair_counting_example(self):
        scores = self._probs([0.9, 0.8, 0.7, 0.85])
        aucs, _, _ = roc_auc_ovr(scores, np.array([0, 0, 1, 1]))
        assert aucs[0] == 0.75

    def test_degenerate_class_excluded(self):
        scores = np.full((3, 3), 1 / 3)
        scores[0] = [0.5, 0.3, 0.2]
        aucs, macro, excluded = roc_auc_ovr(scores, np.array([0, 0, 1]))
        assert excluded == [2]  # class 2 has no positives
        assert np.isnan(aucs[2])
        assert np.isclose(macro, np.mean([aucs[0], aucs[1]]))

    def test_row_sum_precondition(self):
        with pytest.raises(ValueError, match="sum to 1"):
            roc_auc_ovr(np.array([[0.5, 0.6]]), np.array([0]))


class TestBruteForceEquivalence:
    def test_metrics_match_rational_recount(self):
        rng = np.random.default_rng(42)
        for _ in range(60):
            k = int(rng.integers(2, 6))
            n = int(rng.integers(1, 50))
            true = rng.integers(0, k, n)
            pred = rng.integers(0, k, n)
            cm = confusion(true, pred, k)
            pc = class_metrics(cm)
            ref = brute_class_metrics(true.tolist(), pred.tolist(), k)
            for c in range(k):
                for name, arr in (("precision", pc.precision),
                                  ("recall", pc.recall), ("f1", pc.f1),
                                  ("specificity", pc.specificity)):
                    want = ref[c][name]
                    if want is None:
                        assert arr[c] == 0.0
                    else:
                        assert abs(arr[c] - float(want)) < 1e-12
                assert pc.support[c] == ref[c]["support"]

    def test_auc_matches_pair_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            k = int(rng.integers(2, 5))
            n = int(rng.integers(2, 30))
            true = rng.integers(0, k, n)
            # quantized scores force plenty of exact ties
            raw = rng.integers(0, 5, (n, k)).astype(np.float64) + 0.25
            probs = raw / raw.sum(axis=1, keepdims=True)
            aucs, macro, excluded = roc_auc_ovr(probs, true)
            vals = []
            for c in range(k):
                want = brute_auc(probs[:, c].tolist(), true.tolist(), c)
                if want is None:
                    assert c in excluded
                else:
                    assert abs(aucs[c] - float(want)) < 1e-12
                    vals.append(float(want))
            if vals:
                assert abs(macro - np.mean(vals)) < 1e-12

    def test_micro_recall_equals_accuracy(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            k = int(rng.integers(2, 6))
            n = int(rng.integers(1, 40))
            true = rng.integers(0, k, n)
            pred = rng.integers(0, k, n)
            cm = confusion(true, pred, k)
            accuracy = np.trace(cm) / cm.sum()
            micro_recall = np.trace(cm) / cm.sum()  # sum TP / sum (TP+FN)
            assert np.isclose(accuracy, micro_recall, atol=0)
            tp = np.diag(cm).sum()
            support_total = cm.sum(axis=1).sum()
            assert np.isclose(tp / support_total, accuracy)

    def test_diagonal_specificity_is_one(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            diag = rng.integers(1, 9, rng.integers(2, 5))
            pc = class_metrics(np.diag(diag))
            assert np.allclose(pc.specificity, 1.0)


class TestReportFiles:
    def test_report_and_confusion_csvs(self, tmp_path):
        rng = np.random.default_rng(3)
        true = rng.integers(0, 3, 30)
        raw = rng.uniform(0.1, 1, (30, 3))
        probs = raw / raw.sum(axis=1, keepdims=True)
        report = build_report(true, probs, class_names=["a", "b", "c"])
        rp = tmp_path / "classification_report.csv"
        cp = tmp_path / "confusion_matrix.csv"
        write_report_csv(report, str(rp))
        write_confusion_csv(report.confusion, str(cp), ["a", "b", "c"])
        text = rp.read_text()
        assert "weighted_f1" in text and "macro_f1" in text
        assert "macro_auc" in text
        rows = cp.read_text().strip().splitlines()
        assert len(rows) == 4  # header + 3 classes
        total = sum(int(v) for row in rows[1:] for v in row.split(",")[1:])
        assert total == 30
        assert 0.0 <= report.accuracy <= 1.0
