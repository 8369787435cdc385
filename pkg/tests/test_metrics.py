import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st

from exprnet.metrics import (ConfusionMatrix, MetricsError, MetricsReport, abaw2_score,
                             accuracy, argmax_predictions, confusion_matrix, f1_scores)

import oracles


class TestConfusionMatrix:
    def test_perfect_predictions_diagonal(self):
        labels = [0, 1, 2, 3, 4, 5, 6, 0, 3]
        cm = confusion_matrix(labels, labels)
        assert np.trace(cm.counts) == 9
        assert cm.counts.sum() == 9
        npt.assert_array_equal(cm.counts.sum(axis=1), cm.support)

    def test_hand_count(self):
        cm = confusion_matrix([0, 1, 1, 2], [0, 1, 2, 2])
        assert cm.counts[0, 0] == 1
        assert cm.counts[1, 1] == 1
        assert cm.counts[2, 1] == 1
        assert cm.counts[2, 2] == 1
        assert cm.counts.sum() == 4

    def test_matches_independent_tally(self):
        rng = np.random.default_rng(0)
        preds = rng.integers(0, 7, size=10_000)
        labels = rng.integers(0, 7, size=10_000)
        cm = confusion_matrix(preds, labels)
        npt.assert_array_equal(cm.counts, oracles.confusion_tally(preds, labels))

    def test_length_mismatch_errors(self):
        with pytest.raises(MetricsError):
            confusion_matrix([0, 1], [0])

    def test_out_of_range_errors(self):
        with pytest.raises(MetricsError):
            confusion_matrix([7], [0])


class TestAccuracy:
    def test_perfect(self):
        assert accuracy(confusion_matrix([0, 1, 2], [0, 1, 2])) == 1.0

    def test_three_of_four(self):
        assert accuracy(confusion_matrix([0, 1, 1, 2], [0, 1, 2, 2])) == 0.75

    def test_empty_errors(self):
        with pytest.raises(MetricsError):
            accuracy(ConfusionMatrix(np.zeros((7, 7), dtype=np.int64)))

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        preds = rng.integers(0, 7, size=500)
        labels = rng.integers(0, 7, size=500)
        base = accuracy(confusion_matrix(preds, labels))
        for _ in range(100):
            perm = rng.permutation(7)
            assert accuracy(confusion_matrix(perm[preds], perm[labels])) == pytest.approx(base)


class TestF1:
    def test_perfect_all_classes(self):
        labels = list(range(7)) * 3
        per_class, macro, weighted = f1_scores(confusion_matrix(labels, labels))
        npt.assert_allclose(per_class, 1.0)
        assert macro == pytest.approx(1.0, abs=1e-12)
        assert weighted == pytest.approx(1.0, abs=1e-12)

    def test_half_precision_recall(self):
        # class 0: P = R = 0.5 -> F1 = 0.5
        cm = confusion_matrix([0, 1, 0, 1], [0, 0, 1, 1])
        per_class, _, _ = f1_scores(cm)
        assert per_class[0] == pytest.approx(0.5)

    def test_four_sample_case_against_pr_oracle(self):
        preds, labels = [0, 1, 1, 2], [0, 1, 2, 2]
        cm = confusion_matrix(preds, labels)
        per_class, macro, weighted = f1_scores(cm)
        npt.assert_allclose(per_class, [1.0, 2 / 3, 2 / 3, 0, 0, 0, 0], atol=1e-12)
        assert macro == pytest.approx((1 + 2 / 3 + 2 / 3) / 7, abs=1e-9)
        precision, recall = oracles.per_class_precision_recall(cm.counts)
        for c in range(7):
            pr = precision[c] + recall[c]
            expected = 2 * precision[c] * recall[c] / pr if pr else 0.0
            assert per_class[c] == pytest.approx(expected, abs=1e-12)

    def test_f1_bounded_by_max_pr(self):
        rng = np.random.default_rng(2)
        preds = rng.integers(0, 7, size=300)
        labels = rng.integers(0, 7, size=300)
        cm = confusion_matrix(preds, labels)
        per_class, _, _ = f1_scores(cm)
        precision, recall = oracles.per_class_precision_recall(cm.counts)
        for c in range(7):
            assert 0.0 <= per_class[c] <= max(precision[c], recall[c]) + 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=200))
    def test_weighted_f1_identity(self, pairs):
        preds = [p for p, _ in pairs]
        labels = [y for _, y in pairs]
        cm = confusion_matrix(preds, labels)
        per_class, _, weighted = f1_scores(cm)
        manual = sum(int(s) * f for s, f in zip(cm.support, per_class)) / cm.total
        assert weighted == pytest.approx(manual, abs=1e-12)


class TestScore:
    def test_boundaries(self):
        assert abaw2_score(1.0, 1.0) == pytest.approx(1.0)
        assert abaw2_score(0.0, 0.0) == 0.0

    def test_reported_rounded_inputs(self):
        # 0.33*0.521 + 0.67*0.33 with the published rounded metrics; the
        # published composite 0.4004 implies unrounded inputs and is
        # intentionally NOT asserted here.
        assert abaw2_score(0.521, 0.33) == pytest.approx(0.39303, abs=1e-9)

    def test_strictly_increasing(self):
        assert abaw2_score(0.6, 0.5) > abaw2_score(0.5, 0.5)
        assert abaw2_score(0.5, 0.6) > abaw2_score(0.5, 0.5)


class TestReport:
    def test_rows_and_score_consistency(self):
        rng = np.random.default_rng(3)
        preds = rng.integers(0, 7, size=200)
        labels = rng.integers(0, 7, size=200)
        report = MetricsReport.from_predictions(preds, labels)
        assert report.score == pytest.approx(0.33 * report.accuracy + 0.67 * report.macro_f1,
                                             abs=1e-15)
        names = [n for n, _ in report.rows()]
        assert names == ["Overall Accuracy", "Macro F1 average", "Weighted F1 average", "Score"]
        assert report.macro_f1 == pytest.approx(report.per_class_f1.mean(), abs=1e-15)

    def test_order_invariance(self):
        rng = np.random.default_rng(4)
        preds = rng.integers(0, 7, size=100)
        labels = rng.integers(0, 7, size=100)
        a = MetricsReport.from_predictions(preds, labels)
        perm = rng.permutation(100)
        b = MetricsReport.from_predictions(preds[perm], labels[perm])
        assert a.accuracy == b.accuracy and a.macro_f1 == b.macro_f1

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(5)
        preds = rng.integers(0, 7, size=400)
        labels = rng.integers(0, 7, size=400)
        base = MetricsReport.from_predictions(preds, labels)
        for _ in range(100):
            perm = rng.permutation(7)
            r = MetricsReport.from_predictions(perm[preds], perm[labels])
            assert r.accuracy == pytest.approx(base.accuracy, abs=1e-12)
            assert r.macro_f1 == pytest.approx(base.macro_f1, abs=1e-12)
            assert r.weighted_f1 == pytest.approx(base.weighted_f1, abs=1e-12)


class TestArgmax:
    def test_lowest_index_tie_break(self):
        logits = np.array([[1.0, 1.0, 0.5], [0.2, 0.9, 0.9]])
        npt.assert_array_equal(argmax_predictions(logits), [0, 1])

    def test_shift_invariant(self):
        rng = np.random.default_rng(6)
        logits = rng.standard_normal((50, 7))
        shifted = logits + rng.standard_normal((50, 1)) * 100
        npt.assert_array_equal(argmax_predictions(logits), argmax_predictions(shifted))
