import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import greedy_counts, interpolated_ap, scanline_iou
from rbstream.exceptions import EmptyGroundTruth, SequenceMismatch
from rbstream.geometry import RotatedBox, canonicalize, rotated_iou
from rbstream.streameval import (
    IOU_THRESHOLDS,
    FrameRecord,
    Mode,
    average_precision,
    build_triplets,
    evaluate,
    match_frame,
    match_frame_multi,
    nms_rotated,
    pr_curve,
    precision_recall_f1,
    shift_ground_truth,
)


def box(cx, cy, w=10.0, h=20.0, angle=0.0, conf=None):
    return canonicalize(RotatedBox(cx, cy, w, h, angle, conf))


def random_boxes(rng, n, conf=False):
    out = []
    for _ in range(n):
        c = float(rng.uniform(0.0, 1.0)) if conf else None
        out.append(box(*rng.uniform(0, 60, 2), *rng.uniform(4, 25, 2), rng.uniform(-1.5, 1.5), conf=c))
    return out


def jitter(rng, b, scale=2.0, conf=None):
    return box(b.cx + rng.normal(scale=scale), b.cy + rng.normal(scale=scale), b.w, b.h, b.angle + rng.normal(scale=0.1), conf)


def frames(seq, n, gts=lambda t: ()):
    return [FrameRecord(seq, t, gts(t)) for t in range(n)]


class TestTriplets:
    def test_offline_three_frames(self):
        ts = build_triplets(frames("a", 3), Mode.OFFLINE)
        assert len(ts) == 2
        assert [(t.f_t.frame_index, t.f_tm1.frame_index, t.target_frame) for t in ts] == [(1, 0, 1), (2, 1, 2)]

    def test_online_three_frames(self):
        (t,) = build_triplets(frames("a", 3, lambda t: (box(t, t),)), "online")
        assert t.f_t.frame_index == 1 and t.target_frame == 2
        assert t.g == (box(2, 2),)

    def test_no_cross_sequence(self):
        ts = build_triplets(frames("a", 2) + frames("b", 2), Mode.OFFLINE)
        assert len(ts) == 2
        assert all(t.f_t.sequence_id == t.f_tm1.sequence_id for t in ts)

    def test_gaps_and_short(self):
        fs = [FrameRecord("a", t) for t in (0, 2, 3)]
        assert [t.f_t.frame_index for t in build_triplets(fs)] == [3]
        assert build_triplets(frames("a", 1)) == []

    def test_duplicate_frame(self):
        with pytest.raises(ValueError):
            build_triplets([FrameRecord("a", 0), FrameRecord("a", 0)])


class TestMatch:
    def test_exact(self):
        g = box(10, 10)
        m = match_frame([box(10, 10, conf=0.9)], [g], 0.5)
        assert (m.tp, m.fp, m.fn) == (1, 0, 0)
        assert m.matches == [(0, 0, pytest.approx(1.0))]

    def test_no_dets(self):
        m = match_frame([], [box(0, 0), box(30, 30)])
        assert (m.tp, m.fp, m.fn) == (0, 0, 2)

    def test_two_dets_one_gt(self):
        g = box(10, 10)
        dets = [box(10.5, 10, conf=0.6), box(10, 10, conf=0.8)]
        m = match_frame(dets, [g], 0.5)
        assert (m.tp, m.fp, m.fn) == (1, 1, 0)
        assert m.matches[0][0] == 1
        assert [f.is_tp for f in m.flags] == [True, False]

    def test_greedy_is_best_order_here(self):
        # brute force over all det orders: no order yields more than one TP
        g = box(10, 10)
        dets = [box(10.5, 10, conf=0.6), box(10, 10, conf=0.8)]
        for order in ([0, 1], [1, 0]):
            assert greedy_counts([(dets[k].as_tuple(), 0.5) for k in order], [g.as_tuple()], scanline_iou, 0.5, 0.01)[0] == 1

    def test_conf_filter(self):
        m = match_frame([box(0, 0, conf=0.01), box(0, 0, conf=0.011)], [box(0, 0)])
        assert (m.tp, m.fp, m.fn) == (1, 0, 0)

    def test_gt_tie_lowest_index(self):
        g = box(10, 10)
        m = match_frame([box(10, 10, conf=0.5)], [g, g], 0.5)
        assert m.matches[0][1] == 0

    def test_conf_tie_input_order(self):
        g = box(10, 10)
        m = match_frame([box(11, 10, conf=0.5), box(10, 10, conf=0.5)], [g], 0.5)
        assert m.matches[0][0] == 0

    def test_against_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(40):
            gts = random_boxes(rng, int(rng.integers(0, 6)))
            dets = [jitter(rng, g, conf=float(rng.uniform())) for g in gts] + random_boxes(rng, int(rng.integers(0, 4)), conf=True)
            for m in match_frame_multi(dets, gts, (0.3, 0.5, 0.7)):
                want = greedy_counts([(d.as_tuple(), d.conf) for d in dets], [g.as_tuple() for g in gts], lambda a, b: rotated_iou(RotatedBox(*a), RotatedBox(*b)), m.threshold, 0.01)
                assert (m.tp, m.fp, m.fn) == want

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(0, 5), st.integers(0, 5))
    def test_conservation_and_monotone(self, seed, n_gt, n_extra):
        rng = np.random.default_rng(seed)
        gts = random_boxes(rng, n_gt)
        dets = [jitter(rng, g, conf=float(rng.uniform())) for g in gts] + random_boxes(rng, n_extra, conf=True)
        kept = sum(d.conf > 0.01 for d in dets)
        ms = match_frame_multi(dets, gts)
        for m in ms:
            assert m.tp + m.fp == kept
            assert m.tp + m.fn == len(gts)
        tps = [m.tp for m in ms]
        assert all(a >= b for a, b in zip(tps, tps[1:]))


class TestCurves:
    def test_single_tp(self):
        assert pr_curve([(0.9, True)], 1) == [(1.0, 1.0)]

    def test_tp_then_fp(self):
        assert pr_curve([(0.4, False), (0.9, True)], 1) == [(1.0, 1.0), (1.0, 0.5)]

    def test_five_detections_hand_table(self):
        flags = [(0.9, True), (0.8, False), (0.7, True), (0.6, True), (0.5, False)]
        want = [(1 / 4, 1.0), (1 / 4, 1 / 2), (2 / 4, 2 / 3), (3 / 4, 3 / 4), (3 / 4, 3 / 5)]
        assert pr_curve(flags, 4) == pytest.approx(want)

    def test_empty_gt(self):
        with pytest.raises(EmptyGroundTruth):
            pr_curve([(0.5, False)], 0)

    def test_ap_perfect(self):
        assert average_precision(pr_curve([(0.9, True), (0.8, True)], 2)) == 1.0

    def test_ap_no_tp(self):
        assert average_precision(pr_curve([(0.9, False)], 3)) == 0.0
        assert average_precision([]) == 0.0

    def test_ap_half(self):
        flags = [(0.9, True), (0.8, False)]
        ap = average_precision(pr_curve(flags, 2))
        assert ap == pytest.approx(51 / 101, abs=1e-15)
        assert ap == pytest.approx(interpolated_ap(flags, 2), abs=1e-15)

    def test_ap_against_definition(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(1, 30))
            flags = list(zip(rng.uniform(size=n).round(2), rng.uniform(size=n) < 0.5))
            total = int(sum(f[1] for f in flags) + rng.integers(0, 4)) or 1
            assert average_precision(pr_curve(flags, total)) == pytest.approx(interpolated_ap(flags, total), abs=1e-12)

    def test_ap_permutation_of_equal_flags(self):
        flags = [(0.5, True)] * 3 + [(0.7, False)] * 2 + [(0.9, True), (0.2, False), (0.2, False)]
        ap = average_precision(pr_curve(flags, 6))
        rng = np.random.default_rng(2)
        for _ in range(20):
            perm = [flags[k] for k in rng.permutation(len(flags))]
            assert average_precision(pr_curve(perm, 6)) == ap

    def test_duplicate_never_raises_precision(self):
        rng = np.random.default_rng(3)
        gts = random_boxes(rng, 5)
        dets = [jitter(rng, g, scale=0.5, conf=float(rng.uniform(0.2, 1))) for g in gts]
        base = match_frame(dets, gts, 0.5)
        dup = dets + [jitter(rng, gts[0], scale=0.1, conf=float(rng.uniform(0.02, 1)))]
        more = match_frame(dup, gts, 0.5)
        assert more.tp == base.tp
        for conf in np.linspace(0.0, 1.0, 21):
            def prec(m):
                kept = [f for f in m.flags if f.conf >= conf]
                return sum(f.is_tp for f in kept) / len(kept) if kept else 1.0
            assert prec(more) <= prec(base) + 1e-15


class TestMetrics:
    @pytest.mark.parametrize(
        "tp,fp,fn,p,r,f1",
        [
            (2152, 3161, 3311, 0.40504, 0.39392, 0.39940),
            (312, 5001, 5151, 0.05872, 0.05711, 0.05790),
        ],
    )
    def test_reference_rows(self, tp, fp, fn, p, r, f1):
        got_p, got_r, got_f1, undefined = precision_recall_f1(tp, fp, fn)
        assert (got_p, got_r) == pytest.approx((p, r), abs=5e-6)
        assert undefined == []
        # the reference F1 follows from the reference P and R, which are already rounded
        assert 2 * p * r / (p + r) == pytest.approx(f1, abs=5e-6)
        assert got_f1 == pytest.approx(f1, abs=1e-5)

    def test_reference_streaming_row(self):
        p, r, _, _ = precision_recall_f1(55100, 181166, 81224)
        assert p == pytest.approx(0.23321, abs=5e-6)
        assert r == pytest.approx(0.40418, abs=5e-6)

    def test_zero_denominators(self):
        assert precision_recall_f1(0, 0, 3) == (0.0, 0.0, 0.0, ["precision", "f1"])
        assert precision_recall_f1(0, 0, 0) == (0.0, 0.0, 0.0, ["precision", "recall", "f1"])

    @given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
    def test_f1_identity(self, tp, fp, fn):
        p, r, f1, undefined = precision_recall_f1(tp, fp, fn)
        assert 0 <= p <= 1 and 0 <= r <= 1 and 0 <= f1 <= 1
        if p + r > 0:
            assert abs(f1 - 2 * p * r / (p + r)) < 1e-12


def make_sequence(rng, seq, n, n_obj=4):
    """Ground truth and noisy detections for a short sequence of moving boxes."""
    starts = random_boxes(rng, n_obj)
    vel = rng.normal(scale=1.5, size=(n_obj, 2))
    gt, det = [], []
    for t in range(n):
        gts = [box(b.cx + t * v[0], b.cy + t * v[1], b.w, b.h, b.angle) for b, v in zip(starts, vel)]
        dets = [jitter(rng, g, scale=1.0, conf=float(rng.uniform(0.02, 1))) for g in gts]
        dets += random_boxes(rng, int(rng.integers(0, 3)), conf=True)
        gt.append(FrameRecord(seq, t, gts))
        det.append(FrameRecord(seq, t, (), dets))
    return gt, det


class TestEvaluate:
    def test_identity(self):
        rng = np.random.default_rng(4)
        gt, _ = make_sequence(rng, "a", 5)
        det = [FrameRecord(f.sequence_id, f.frame_index, (), [RotatedBox(*g.as_tuple(), 0.9) for g in f.gts]) for f in gt]
        rep = evaluate(gt, det)
        assert rep.thresholds == list(IOU_THRESHOLDS)
        for t in IOU_THRESHOLDS:
            r = rep[t]
            assert (r.precision, r.recall, r.f1, r.ap) == (1.0, 1.0, 1.0, 1.0)
        assert rep.ap_mean == 1.0

    def test_ap_mean_is_mean(self):
        rng = np.random.default_rng(5)
        gt, det = make_sequence(rng, "a", 6)
        rep = evaluate(gt, det)
        assert rep.ap_mean == pytest.approx(np.mean([rep[t].ap for t in IOU_THRESHOLDS]), abs=1e-15)
        for t in IOU_THRESHOLDS:
            r = rep[t]
            assert all(0 <= v <= 1 for v in (r.precision, r.recall, r.f1, r.ap))

    def test_shift_equivalence(self):
        rng = np.random.default_rng(6)
        gt, det = [], []
        for seq in ("a", "b"):
            g, d = make_sequence(rng, seq, 6)
            gt += g
            det += d
        shifted = evaluate(gt, det, shift=1)
        pre = evaluate(shift_ground_truth(gt, 1), det, shift=0)
        assert shifted.n_frames == pre.n_frames == 10
        for t in IOU_THRESHOLDS:
            a, b = shifted[t], pre[t]
            assert (a.tp, a.fp, a.fn, a.ap) == (b.tp, b.fp, b.fn, b.ap)

    def test_static_scene_shift(self):
        rng = np.random.default_rng(7)
        gts = random_boxes(rng, 3)
        gt = [FrameRecord("s", t, gts) for t in range(4)]
        det = [FrameRecord("s", t, (), [jitter(rng, g, 0.5, conf=0.8) for g in gts]) for t in range(4)]
        a, b = evaluate(gt, det, shift=1), evaluate(gt, det[:3], shift=0)
        assert a.ap_mean == b.ap_mean and a.n_frames == 3

    def test_streaming_is_harder_on_moving_scene(self):
        rng = np.random.default_rng(8)
        gt, det = make_sequence(rng, "a", 10)
        assert evaluate(gt, det, shift=1).ap_mean <= evaluate(gt, det, shift=0).ap_mean

    def test_frame_order_irrelevant(self):
        rng = np.random.default_rng(9)
        gt, det = make_sequence(rng, "a", 6)
        a = evaluate(gt, det, shift=1)
        b = evaluate(gt[::-1], det[::-1], shift=1)
        assert a.ap_mean == b.ap_mean and a[0.5].tp == b[0.5].tp

    def test_workers_deterministic(self):
        rng = np.random.default_rng(10)
        gt, det = make_sequence(rng, "a", 8)
        a, b = evaluate(gt, det, workers=1), evaluate(gt, det, workers=4)
        assert a.ap_mean == b.ap_mean
        assert all(a[t].pr == b[t].pr for t in IOU_THRESHOLDS)

    def test_sequence_mismatch(self):
        with pytest.raises(SequenceMismatch):
            evaluate([FrameRecord("a", 0)], [FrameRecord("b", 0, (), ())])

    def test_no_ground_truth_flags_ap(self):
        rep = evaluate([FrameRecord("a", 0)], [FrameRecord("a", 0, (), [box(0, 0, conf=0.5)])])
        r = rep[0.5]
        assert r.ap == 0.0 and "ap" in r.undefined and r.fp == 1

    def test_negative_shift(self):
        with pytest.raises(ValueError):
            evaluate([], [], shift=-1)


class TestNms:
    def test_suppresses_duplicates(self):
        a = box(10, 10, conf=0.9)
        b = box(10.2, 10, conf=0.5)
        c = box(40, 40, conf=0.7)
        assert nms_rotated([b, a, c]) == [1, 2]

    def test_threshold_is_strict(self):
        a, b = box(0, 0, conf=0.9), box(0, 0, conf=0.8)
        assert nms_rotated([a, b], iou_threshold=1.0) == [0, 1]
        assert nms_rotated([a, b], iou_threshold=0.99) == [0]

    def test_kept_boxes_overlap_little(self):
        rng = np.random.default_rng(11)
        boxes = random_boxes(rng, 40, conf=True)
        keep = nms_rotated(boxes)
        for i in keep:
            for j in keep:
                if i < j:
                    assert rotated_iou(boxes[i], boxes[j]) <= 0.65
        confs = [boxes[k].conf for k in keep]
        assert confs == sorted(confs, reverse=True)
