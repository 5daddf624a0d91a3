import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tinycrnn.errors import EvaluationError
from tinycrnn.evaluation import (DetCurve, DetPoint, EndpointStats, ablation_table, det_curve,
                                 endpoint_deltas, fa_at_mr, format_latency, latency, summary,
                                 summary_json)
from tinycrnn.streaming import Detection


def brute_force_det(scores, labels, thresholds):
    out = []
    for t in thresholds:
        misses = sum(1 for s, l in zip(scores, labels) if l == 1 and s < t)
        fas = sum(1 for s, l in zip(scores, labels) if l == 0 and s >= t)
        out.append((misses, fas))
    return out


class TestDetCurve:
    def test_hand_example(self):
        c = det_curve([0.9, 0.6, 0.7, 0.2], [1, 1, 0, 0], [0.65])
        p = c.points[0]
        assert (p.misses, p.mr, p.false_detects, p.fdr) == (1, 0.5, 1, 0.5)

    def test_zero_threshold_all_fire(self):
        p = det_curve([0.3, 0.0, 0.5], [1, 0, 0]).points[0]
        assert p.threshold == 0 and p.mr == 0 and p.fdr == 1

    def test_separable_has_perfect_point(self):
        c = det_curve([0.8, 0.9, 0.1, 0.3], [1, 1, 0, 0])
        assert any(p.misses == 0 and p.false_detects == 0 for p in c)

    def test_ties_fire(self):
        p = det_curve([0.5, 0.5], [1, 0], [0.5]).points[0]
        assert p.misses == 0 and p.false_detects == 1

    def test_default_grid(self):
        c = det_curve([0.2, 0.8], [0, 1])
        assert len(c) == 1001
        assert c.points[0].threshold == 0.0 and c.points[-1].threshold == 1.0

    def test_matches_brute_force(self, rng):
        scores = rng.uniform(size=60)
        labels = rng.integers(0, 2, 60)
        th = np.linspace(0, 1, 37)
        c = det_curve(scores, labels, th)
        assert [(p.misses, p.false_detects) for p in c] == brute_force_det(scores, labels, th)

    @pytest.mark.parametrize("labels", [[1, 1], [0, 0]])
    def test_single_class(self, labels):
        with pytest.raises(EvaluationError):
            det_curve([0.1, 0.2], labels)

    def test_length_mismatch(self):
        with pytest.raises(EvaluationError):
            det_curve([0.1, 0.2], [1])

    def test_csv(self):
        text = det_curve([0.2, 0.8], [0, 1], [0.0, 0.5]).to_csv()
        assert text == "threshold,fdr,mr\n0,1,0\n0.5,0,0\n"

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=2, max_size=60))
    def test_monotone(self, items):
        labels = [int(b) for _, b in items]
        if len(set(labels)) < 2:
            labels[0], labels[1] = 0, 1
        c = det_curve([s for s, _ in items], labels,
                      np.random.default_rng(len(items)).uniform(size=50))
        assert np.all(np.diff(c.mr) >= 0)
        assert np.all(np.diff(c.fdr) <= 0)


def curve_from(rows):
    pts = tuple(DetPoint(t, fa, fa / 100, int(mr * 100), mr) for t, mr, fa in rows)
    return DetCurve(pts, 100, 100)


class TestFaAtMr:
    def test_rule(self):
        op = fa_at_mr(curve_from([(0.3, 0.10, 12), (0.5, 0.20, 4)]))
        assert (op.threshold, op.false_detects, op.qualified) == (0.3, 12, True)
        assert tuple(op) == (0.3, 12)

    def test_largest_qualifying_threshold(self):
        op = fa_at_mr(curve_from([(0.1, 0.0, 50), (0.3, 0.15, 12), (0.5, 0.2, 4)]))
        assert op.threshold == 0.3

    def test_perfect_classifier(self):
        op = fa_at_mr(det_curve([0.9, 0.95, 0.1, 0.05], [1, 1, 0, 0]))
        assert op.false_detects == 0 and op.qualified

    def test_unreachable_target_flagged(self):
        op = fa_at_mr(curve_from([(0.3, 0.4, 1), (0.5, 0.6, 0)]))
        assert not op.qualified and op.threshold == 0.3

    def test_empty_curve(self):
        with pytest.raises(EvaluationError):
            fa_at_mr(DetCurve((), 0, 0))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from(["exp", "cube", "affine", "logit"]))
    def test_rank_invariance(self, seed, transform):
        r = np.random.default_rng(seed)
        n = int(r.integers(4, 60))
        labels = r.integers(0, 2, n)
        labels[:2] = [0, 1]
        scores = r.uniform(0.01, 0.99, n)
        f = {"exp": np.exp, "cube": lambda x: x ** 3, "affine": lambda x: 3 * x - 7,
             "logit": lambda x: np.log(x / (1 - x))}[transform]
        a = fa_at_mr(det_curve(scores, labels, np.unique(scores)))
        b = fa_at_mr(det_curve(f(scores), labels, np.unique(f(scores))))
        assert (a.false_detects, a.qualified) == (b.false_detects, b.qualified)


class TestEndpoints:
    def test_exact(self):
        s = endpoint_deltas([(10, 40)], [(10, 40)])
        assert (s.mean_abs_start_delta, s.mean_abs_end_delta, s.mean_signed_end_delta) == (0, 0, 0)

    def test_late_end(self):
        s = endpoint_deltas([(10, 60)], [(10, 40)])
        assert s.mean_abs_end_delta == 200 and s.mean_signed_end_delta == 200

    def test_maximal_overlap_match(self):
        s = endpoint_deltas([(0, 12), (15, 45)], [(10, 40)])
        assert s.mean_signed_end_delta == 50 and s.mean_signed_start_delta == 50

    def test_unmatched_counted(self):
        s = endpoint_deltas([(0, 10)], [(5, 15), (100, 120)])
        assert (s.n_matched, s.n_unmatched) == (1, 1)

    def test_accepts_detections(self):
        s = endpoint_deltas([Detection(0.9, 3, 102, 100)], [(0, 99)])
        assert s.mean_signed_end_delta == 30

    def test_empty_match(self):
        with pytest.raises(EvaluationError):
            endpoint_deltas([(0, 5)], [(10, 20)])

    def test_brute_force(self, rng):
        refs = [(100 * i + int(s), 100 * i + int(s) + 29) for i, s in enumerate(rng.integers(0, 20, 20))]
        dets = [(a + int(rng.integers(-8, 8)), b + int(rng.integers(-8, 8))) for a, b in refs]
        s = endpoint_deltas(dets, refs, frame_ms=10)
        ds = [10 * (d[0] - r[0]) for d, r in zip(dets, refs)]
        de = [10 * (d[1] - r[1]) for d, r in zip(dets, refs)]
        assert s.mean_abs_start_delta == pytest.approx(np.mean(np.abs(ds)))
        assert s.mean_abs_end_delta == pytest.approx(np.mean(np.abs(de)))
        assert s.mean_signed_end_delta == pytest.approx(np.mean(de))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 500), st.integers(21, 60), st.integers(-10, 10),
                              st.integers(-10, 10)), min_size=1, max_size=10))
    def test_swap_symmetry(self, items):
        refs = [(10 ** 4 * i + a, 10 ** 4 * i + a + n) for i, (a, n, _, _) in enumerate(items)]
        dets = [(r[0] + da, r[1] + db) for r, (_, _, da, db) in zip(refs, items)]
        fwd = endpoint_deltas(dets, refs)
        back = endpoint_deltas(refs, dets)
        assert back.mean_signed_end_delta == pytest.approx(-fwd.mean_signed_end_delta)
        assert back.mean_abs_end_delta == pytest.approx(fwd.mean_abs_end_delta)
        assert back.mean_abs_start_delta == pytest.approx(fwd.mean_abs_start_delta)


def stats_with(signed_end):
    return EndpointStats(0.0, abs(signed_end), signed_end, 0.0, 2, 0)


class TestLatency:
    def test_formula(self):
        assert latency(stats_with(150.0)) == 200.0
        assert latency(stats_with(0.0)) == 50.0
        assert latency(endpoint_deltas([(0, 10), (100, 130)], [(0, 0), (100, 110)])) == 200.0

    def test_format(self):
        assert format_latency(218.0) == "latency 218ms"


class TestReports:
    def test_summary_round_trip(self):
        import json
        c = det_curve([0.9, 0.2, 0.6, 0.1], [1, 0, 1, 0])
        rec = summary(c, stats_with(100.0))
        assert json.loads(summary_json(rec))["latency_ms"] == 150.0
        assert rec["fa_at_mr"]["false_detects"] == 0

    def test_ablation_table_direction(self):
        c1 = fa_at_mr(curve_from([(0.3, 0.10, 12)]))
        c2 = fa_at_mr(curve_from([(0.3, 0.10, 7)]))
        table = ablation_table([("attention", c1, 100), ("no-attention", c2, 100)])
        assert "fewer (-5)" in table.splitlines()[2]
