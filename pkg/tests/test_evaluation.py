import numpy as np
import pytest
from scipy.stats import rankdata

from crowdanom.core import InputError
from crowdanom.evaluation import Metrics, auc, eer, evaluate, load_labels, roc


def brute_force_roc(scores, labels):
    """Direct threshold sweep: one point per distinct score, descending."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = labels.sum()
    n_neg = labels.size - n_pos
    points = [(0.0, 0.0, np.inf)]
    for t in sorted(set(scores.tolist()), reverse=True):
        called = scores >= t
        fp = int((called & (labels == 0)).sum())
        tp = int((called & (labels == 1)).sum())
        points.append((fp / n_neg, tp / n_pos, t))
    return np.array(points, dtype=np.float64)


def mann_whitney_auc(scores, labels):
    """Rank-statistic AUC; ties get average ranks, matching the trapezoid rule."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = labels.sum()
    n_neg = labels.size - n_pos
    ranks = rankdata(scores)
    r_pos = ranks[labels == 1].sum()
    return (r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


class TestRoc:
    def test_matches_brute_force_sweep(self):
        rng = np.random.default_rng(60)
        scores = rng.uniform(0, 1, 50)
        labels = rng.integers(0, 2, 50)
        labels[0] = 0
        labels[1] = 1
        np.testing.assert_array_equal(roc(scores, labels),
                                      brute_force_roc(scores, labels))

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(61)
        scores = rng.integers(0, 5, 80).astype(np.float64)  # heavy ties
        labels = rng.integers(0, 2, 80)
        labels[:2] = (0, 1)
        np.testing.assert_array_equal(roc(scores, labels),
                                      brute_force_roc(scores, labels))

    def test_perfect_separation(self):
        scores = np.array([0.1] * 5 + [0.9] * 5)
        labels = np.array([0] * 5 + [1] * 5)
        pts = roc(scores, labels)
        np.testing.assert_array_equal(
            pts, [(0.0, 0.0, np.inf), (0.0, 1.0, 0.9), (1.0, 1.0, 0.1)])

    def test_constant_scores_single_point(self):
        pts = roc(np.full(8, 0.5), np.array([0, 1] * 4))
        np.testing.assert_array_equal(pts, [(0.0, 0.0, np.inf), (1.0, 1.0, 0.5)])

    def test_rejects_single_class(self):
        with pytest.raises(InputError):
            roc(np.array([0.1, 0.2]), np.array([1, 1]))

    def test_rejects_length_mismatch(self):
        with pytest.raises(InputError):
            roc(np.array([0.1, 0.2, 0.3]), np.array([0, 1]))

    def test_rejects_bad_label_values(self):
        with pytest.raises(InputError):
            roc(np.array([0.1, 0.2]), np.array([0, 2]))


class TestAuc:
    def test_perfect_curve(self):
        scores = np.array([0.1] * 5 + [0.9] * 5)
        labels = np.array([0] * 5 + [1] * 5)
        assert auc(roc(scores, labels)) == 1.0

    def test_constant_scores_give_half(self):
        assert auc(roc(np.full(8, 0.5), np.array([0, 1] * 4))) == pytest.approx(0.5)

    def test_matches_rank_statistic(self):
        rng = np.random.default_rng(62)
        for trial in range(20):
            n = int(rng.integers(10, 120))
            if trial % 2:
                scores = rng.integers(0, 6, n).astype(np.float64)  # tied scores
            else:
                scores = rng.normal(0, 1, n)
            labels = rng.integers(0, 2, n)
            labels[:2] = (0, 1)
            assert auc(roc(scores, labels)) == pytest.approx(
                mann_whitney_auc(scores, labels), abs=1e-9)

    def test_inverted_scores_complement(self):
        rng = np.random.default_rng(63)
        scores = rng.uniform(0, 1, 40)
        labels = rng.integers(0, 2, 40)
        labels[:2] = (0, 1)
        a = auc(roc(scores, labels))
        b = auc(roc(-scores, labels))
        assert a + b == pytest.approx(1.0, abs=1e-9)


class TestEer:
    def test_hand_interpolated_curve(self):
        pts = np.array([
            (0.0, 0.0, np.inf),
            (0.2, 0.7, 0.9),
            (0.3, 0.8, 0.5),
            (1.0, 1.0, 0.1),
        ])
        # g = fpr + tpr - 1 crosses zero between the 2nd and 3rd points:
        # g0 = -0.1, g1 = 0.1, t = 0.5, fpr = 0.2 + 0.5 * 0.1
        assert eer(pts) == pytest.approx(0.25, abs=1e-12)

    def test_exact_vertex(self):
        pts = np.array([(0.0, 0.0, np.inf), (0.5, 0.5, 0.7), (1.0, 1.0, 0.2)])
        assert eer(pts) == 0.5

    def test_perfect_curve_zero(self):
        scores = np.array([0.1] * 5 + [0.9] * 5)
        labels = np.array([0] * 5 + [1] * 5)
        assert eer(roc(scores, labels)) == 0.0

    def test_constant_scores_give_half(self):
        assert eer(roc(np.full(8, 0.5), np.array([0, 1] * 4))) == pytest.approx(0.5)


class TestEvaluate:
    def test_bundles_counts_and_curve(self):
        rng = np.random.default_rng(64)
        scores = rng.uniform(0, 1, 30)
        labels = np.array([0] * 18 + [1] * 12)
        m = evaluate(scores, labels)
        assert isinstance(m, Metrics)
        assert m.n_pos == 12
        assert m.n_neg == 18
        assert m.auc == pytest.approx(auc(roc(scores, labels)))
        assert m.eer == pytest.approx(eer(roc(scores, labels)))
        assert m.points.shape[1] == 3


class TestLoadLabels:
    def _write(self, tmp_path, text, name="labels.csv"):
        p = tmp_path / name
        p.write_text(text)
        return p

    def test_with_header(self, tmp_path):
        p = self._write(tmp_path, "frame_index,label\n0,0\n1,1\n2,0\n")
        np.testing.assert_array_equal(load_labels(p), [0, 1, 0])

    def test_without_header(self, tmp_path):
        p = self._write(tmp_path, "0,1\n1,0\n")
        np.testing.assert_array_equal(load_labels(p), [1, 0])

    def test_rows_in_any_order(self, tmp_path):
        p = self._write(tmp_path, "2,1\n0,0\n1,0\n")
        np.testing.assert_array_equal(load_labels(p), [0, 0, 1])

    def test_blank_lines_skipped(self, tmp_path):
        p = self._write(tmp_path, "0,0\n\n1,1\n\n")
        np.testing.assert_array_equal(load_labels(p), [0, 1])

    def test_expected_length_accepts_match(self, tmp_path):
        p = self._write(tmp_path, "0,0\n1,1\n")
        assert load_labels(p, expected_length=2).size == 2

    def test_expected_length_mismatch(self, tmp_path):
        p = self._write(tmp_path, "0,0\n1,1\n")
        with pytest.raises(InputError, match="2 labels"):
            load_labels(p, expected_length=5)

    def test_duplicate_index(self, tmp_path):
        p = self._write(tmp_path, "0,0\n0,1\n")
        with pytest.raises(InputError, match=":2"):
            load_labels(p)

    def test_gap_in_indices(self, tmp_path):
        p = self._write(tmp_path, "0,0\n2,1\n")
        with pytest.raises(InputError, match="gap at 1"):
            load_labels(p)

    def test_label_out_of_range(self, tmp_path):
        p = self._write(tmp_path, "0,0\n1,2\n")
        with pytest.raises(InputError, match="0 or 1"):
            load_labels(p)

    def test_negative_index(self, tmp_path):
        p = self._write(tmp_path, "-1,0\n0,1\n")
        with pytest.raises(InputError, match="negative"):
            load_labels(p)

    def test_malformed_row(self, tmp_path):
        p = self._write(tmp_path, "0,0\n1,0,9\n")
        with pytest.raises(InputError, match=":2"):
            load_labels(p)

    def test_non_integer_row(self, tmp_path):
        p = self._write(tmp_path, "0,0\n1,x\n")
        with pytest.raises(InputError, match="non-integer"):
            load_labels(p)

    def test_header_not_allowed_past_first_line(self, tmp_path):
        p = self._write(tmp_path, "0,0\nframe_index,label\n")
        with pytest.raises(InputError, match="non-integer"):
            load_labels(p)

    def test_empty_file(self, tmp_path):
        p = self._write(tmp_path, "")
        with pytest.raises(InputError, match="no label rows"):
            load_labels(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="not found"):
            load_labels(tmp_path / "absent.csv")
