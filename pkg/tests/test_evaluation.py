import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from case_tables import SITE_ONE, SITE_ONE_AVERAGE, SITE_TWO, SITE_TWO_AVERAGE, table_matching
from firescan.evaluation import class_metrics, compute_metrics, evaluate, match_instances, prf


def pct(x):
    return round(100 * x)


class TestMatching:
    def test_single_pair(self):
        m = match_instances([1], [[0, 0, 0]], [1], [[1, 0, 0]], 1.5)
        assert m.pairs == [(0, 0, 1.0)]
        assert m.false_positives == [] and m.false_negatives == []

    def test_class_mismatch(self):
        m = match_instances([1], [[0, 0, 0]], [2], [[0, 0, 0]], 1.5)
        assert m.pairs == [] and m.false_positives == [0] and m.false_negatives == [0]

    def test_beyond_threshold(self):
        m = match_instances([1], [[0, 0, 0]], [1], [[2, 0, 0]], 1.5)
        assert m.pairs == [] and m.false_positives == [0] and m.false_negatives == [0]

    def test_closest_pair_first(self):
        # greedy takes (p1, g0) at 0.1 first, leaving p0 -> g1
        m = match_instances([3, 3], [[0, 0, 0], [1.0, 0, 0]], [3, 3], [[1.1, 0, 0], [-0.5, 0, 0]])
        assert [(p, g) for p, g, _ in m.pairs] == [(0, 1), (1, 0)]

    def test_one_to_one(self):
        m = match_instances([1, 1, 1], np.zeros((3, 3)), [1], [[0.1, 0, 0]])
        assert len(m.pairs) == 1 and len(m.false_positives) == 2

    def test_empty_sides(self):
        m = match_instances([], np.zeros((0, 3)), [1, 2], np.zeros((2, 3)))
        assert m.false_negatives == [0, 1]
        report = compute_metrics(m, [], [1, 2])
        assert report.recall == 0 and report.precision == 0

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValueError):
            match_instances([1], [[0, 0, 0]], [1], [[0, 0, 0]], 0)


class TestPRF:
    def test_zero_conventions(self):
        assert prf(0, 0, 0) == (0, 0, 0)
        assert prf(0, 3, 0) == (0, 0, 0)

    def test_values(self):
        p, r, f1 = prf(8, 1, 1)
        assert p == pytest.approx(8 / 9) and r == pytest.approx(8 / 9) and f1 == pytest.approx(8 / 9)

    @given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
    def test_f1_bounded_and_symmetric(self, tp, fp, fn):
        p, r, f1 = prf(tp, fp, fn)
        assert 0 <= f1 <= 1
        assert min(p, r) - 1e-12 <= f1 <= max(p, r) + 1e-12
        assert f1 == pytest.approx(prf(tp, fn, fp)[2])

    def test_distance_only_with_tp(self):
        assert class_metrics(1, "a", 0, 2, 3).distance is None
        assert class_metrics(1, "a", 2, 0, 0, [0.5, 0.7]).distance == pytest.approx(0.6)


def check_table(rows, average):
    m, pred, gt, names = table_matching(rows)
    report = compute_metrics(m, pred, gt, names)
    got = [(pct(r.precision), pct(r.recall), pct(r.f1)) for r in report.rows]
    want = [tuple(row[5:8]) for row in rows]
    return report, got, want


class TestPublishedCounts:
    def test_site_one_rows(self):
        report, got, want = check_table(SITE_ONE, SITE_ONE_AVERAGE)
        for g, w in zip(got, want):
            assert all(abs(a - b) <= 1 for a, b in zip(g, w)), (g, w)
        assert [r.gt for r in report.rows] == [row[1] for row in SITE_ONE]

    def test_site_one_average(self):
        report, _, _ = check_table(SITE_ONE, SITE_ONE_AVERAGE)
        p, r, f1, d = SITE_ONE_AVERAGE
        assert abs(pct(report.precision) - p) <= 1
        assert abs(pct(report.recall) - r) <= 1
        assert abs(pct(report.f1) - f1) <= 1
        # the average distance is the plain mean over classes with a TP
        listed = [row[8] for row in SITE_ONE if row[8] is not None]
        assert report.distance == pytest.approx(np.mean(listed))
        assert round(report.distance, 3) == d

    def test_site_two(self):
        report, got, want = check_table(SITE_TWO, SITE_TWO_AVERAGE)
        assert got == want
        p, r, f1, _ = SITE_TWO_AVERAGE
        assert (pct(report.precision), pct(report.recall), pct(report.f1)) == (p, r, f1)

    def test_tp_plus_fn_is_gt(self):
        for rows in (SITE_ONE, SITE_TWO):
            report, _, _ = check_table(rows, None)
            assert all(r.tp + r.fn == r.gt for r in report.rows)


class TestEvaluate:
    def test_perfect(self):
        locs = np.random.default_rng(0).uniform(0, 10, (5, 3))
        report, m = evaluate([1, 2, 3, 4, 5], locs, [1, 2, 3, 4, 5], locs + 0.01)
        assert report.precision == report.recall == report.f1 == 1
        assert report.distance == pytest.approx(0.01 * np.sqrt(3))

    def test_extra_false_positive_lowers_precision_only(self):
        gt = np.array([[0, 0, 0], [5, 0, 0.0]])
        base, _ = evaluate([1, 1], gt, [1, 1], gt)
        worse, _ = evaluate([1, 1, 1], np.vstack([gt, [[20, 0, 0]]]), [1, 1], gt)
        assert worse.recall == base.recall
        assert worse.precision < base.precision

    def test_fp_only_class_excluded_from_average(self):
        report, _ = evaluate([1, 7], [[0, 0, 0], [3, 3, 3]], [1], [[0, 0, 0]])
        assert [r.class_id for r in report.rows] == [1, 7]
        assert report.precision == 1.0

    @given(st.lists(st.tuples(st.integers(1, 3), st.floats(0, 5), st.floats(0, 5)), max_size=12),
           st.lists(st.tuples(st.integers(1, 3), st.floats(0, 5), st.floats(0, 5)), min_size=1, max_size=12),
           st.floats(0.1, 2), st.floats(0.1, 2))
    def test_monotone_in_threshold(self, pred, gt, d1, d2):
        lo, hi = sorted((d1, d2))
        pc = [c for c, *_ in pred]
        pl = np.array([[x, y, 0] for _, x, y in pred]).reshape(-1, 3)
        gc = [c for c, *_ in gt]
        gl = np.array([[x, y, 0] for _, x, y in gt])
        a = match_instances(pc, pl, gc, gl, lo)
        b = match_instances(pc, pl, gc, gl, hi)
        # candidates under the lower threshold are visited identically in both runs
        assert set(a.pairs) <= set(b.pairs)
        for m in (a, b):
            assert len(m.pairs) + len(m.false_negatives) == len(gc)
            assert len(m.pairs) + len(m.false_positives) == len(pc)
