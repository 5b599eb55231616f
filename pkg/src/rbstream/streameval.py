"""Greedy matching, PR curves, AP and the latency-shifted evaluation protocol.

With ``shift=0`` the detections of frame ``t`` are scored against the ground
truth of frame ``t``. With ``shift=k`` they are scored against frame
``t + k`` of the same sequence, which charges the detector for the change
in the scene during its latency.
"""

from __future__ import annotations

import enum
import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .exceptions import EmptyGroundTruth, SequenceMismatch
from .geometry import RotatedBox, iou_matrix, rotated_iou

log = logging.getLogger(__name__)

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
RECALL_POINTS = np.arange(101) / 100.0
DEFAULT_CONF_MIN = 0.01


class Mode(str, enum.Enum):
    OFFLINE = "offline"
    ONLINE = "online"


@dataclass(frozen=True)
class FrameRecord:
    sequence_id: str
    frame_index: int
    gts: tuple = ()
    dets: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "gts", tuple(self.gts))
        if self.dets is not None:
            object.__setattr__(self, "dets", tuple(self.dets))

    @property
    def key(self) -> Tuple[str, int]:
        return (self.sequence_id, self.frame_index)


@dataclass(frozen=True)
class Triplet:
    f_t: FrameRecord
    f_tm1: FrameRecord
    g: tuple
    mode: Mode
    target_frame: int


def _group_sequences(frames: Sequence[FrameRecord]) -> Dict[str, Dict[int, FrameRecord]]:
    seqs: Dict[str, Dict[int, FrameRecord]] = {}
    for f in frames:
        seq = seqs.setdefault(f.sequence_id, {})
        if f.frame_index in seq:
            raise ValueError(f"duplicate frame {f.frame_index} in sequence {f.sequence_id!r}")
        seq[f.frame_index] = f
    return seqs


def build_triplets(frames: Sequence[FrameRecord], mode: Mode = Mode.OFFLINE) -> List[Triplet]:
    """Training/evaluation units ``(F_t, F_t-1, G)`` within each sequence.

    Offline units carry the ground truth of frame ``t``; online units carry
    that of frame ``t + 1``.
    """
    mode = Mode(mode)
    out = []
    for seq_id, seq in _group_sequences(frames).items():
        for t in sorted(seq):
            prev = seq.get(t - 1)
            if prev is None:
                continue
            if mode is Mode.OFFLINE:
                out.append(Triplet(seq[t], prev, seq[t].gts, mode, t))
            else:
                nxt = seq.get(t + 1)
                if nxt is not None:
                    out.append(Triplet(seq[t], prev, nxt.gts, mode, t + 1))
    return out


class DetFlag(NamedTuple):
    conf: float
    is_tp: bool


@dataclass
class FrameMatch:
    """Greedy matching of one frame at one IoU threshold.

    ``flags`` follows the kept detections in descending confidence.
    """

    threshold: float
    matches: List[Tuple[int, int, float]] = field(default_factory=list)
    flags: List[DetFlag] = field(default_factory=list)
    tp: int = 0
    fp: int = 0
    fn: int = 0


def _kept_order(dets: Sequence[RotatedBox], conf_min: float) -> List[int]:
    kept = [k for k, d in enumerate(dets) if d.conf is not None and d.conf > conf_min]
    # stable sort: equal confidences keep input order
    return sorted(kept, key=lambda k: -dets[k].conf)


def _greedy(order, dets, n_gt, ious, threshold) -> FrameMatch:
    out = FrameMatch(threshold)
    used = [False] * n_gt
    for d in order:
        best, best_iou = -1, threshold
        row = ious[d]
        for g in range(n_gt):
            if used[g]:
                continue
            v = row[g]
            if v >= best_iou and (best < 0 or v > best_iou):
                best, best_iou = g, v
        if best >= 0:
            used[best] = True
            out.matches.append((d, best, best_iou))
            out.flags.append(DetFlag(dets[d].conf, True))
            out.tp += 1
        else:
            out.flags.append(DetFlag(dets[d].conf, False))
            out.fp += 1
    out.fn = n_gt - out.tp
    return out


def match_frame(
    dets: Sequence[RotatedBox],
    gts: Sequence[RotatedBox],
    iou_threshold: float = 0.5,
    conf_min: float = DEFAULT_CONF_MIN,
) -> FrameMatch:
    """Match one frame's detections to its ground truth.

    Detections with ``conf <= conf_min`` are dropped. The rest, in descending
    confidence, each take the unmatched ground truth with the highest IoU at
    or above ``iou_threshold`` (lowest index on ties).
    """
    return match_frame_multi(dets, gts, (iou_threshold,), conf_min)[0]


def match_frame_multi(dets, gts, thresholds=IOU_THRESHOLDS, conf_min=DEFAULT_CONF_MIN) -> List[FrameMatch]:
    """:func:`match_frame` at several thresholds sharing one IoU matrix."""
    order = _kept_order(dets, conf_min)
    kept = [dets[k] for k in order]
    ious_kept = iou_matrix(kept, gts) if kept and gts else [[] for _ in kept]
    ious = {d: row for d, row in zip(order, ious_kept)}
    return [_greedy(order, dets, len(gts), ious, t) for t in thresholds]


def _sorted_flags(flags: Sequence) -> List[DetFlag]:
    flags = [DetFlag(float(c), bool(tp)) for c, tp in flags]
    return sorted(flags, key=lambda f: -f.conf)


def pr_table(flags: Sequence, total_gt: int) -> List[Tuple[float, float, float]]:
    """``(conf, recall, precision)`` rows of the cumulative PR scan."""
    if total_gt <= 0:
        raise EmptyGroundTruth("precision/recall curve needs at least one ground-truth box")
    rows = []
    tp = fp = 0
    for f in _sorted_flags(flags):
        if f.is_tp:
            tp += 1
        else:
            fp += 1
        rows.append((f.conf, tp / total_gt, tp / (tp + fp)))
    return rows


def pr_curve(flags: Sequence, total_gt: int) -> List[Tuple[float, float]]:
    """Points ``(recall, precision)`` in descending confidence order.

    ``flags`` holds ``(conf, is_tp)`` pairs gathered over all frames; equal
    confidences keep their given order.
    """
    return [(r, p) for _, r, p in pr_table(flags, total_gt)]


def average_precision(curve: Sequence[Tuple[float, float]]) -> float:
    """101-point interpolated AP with a monotone precision envelope."""
    if not curve:
        return 0.0
    rec = np.array([r for r, _ in curve], dtype=float)
    prec = np.array([p for _, p in curve], dtype=float)
    prec = np.maximum.accumulate(prec[::-1])[::-1]
    idx = np.searchsorted(rec, RECALL_POINTS, side="left")
    sampled = np.where(idx < len(prec), prec[np.minimum(idx, len(prec) - 1)], 0.0)
    return float(np.mean(sampled))


def precision_recall_f1(tp: int, fp: int, fn: int) -> Tuple[float, float, float, List[str]]:
    """Precision, recall and F1 from counts.

    A zero denominator yields 0 for that metric and its name in the
    returned list of undefined metrics.
    """
    undefined = []
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        undefined.append("precision")
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        undefined.append("recall")
    if precision + recall > 0:
        f1 = 2 * (precision * recall) / (precision + recall)
    else:
        f1 = 0.0
        undefined.append("f1")
    return precision, recall, f1, undefined


@dataclass
class ThresholdResult:
    threshold: float
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    ap: float
    undefined: List[str] = field(default_factory=list)
    pr: List[Tuple[float, float, float]] = field(default_factory=list, repr=False)


@dataclass
class EvalReport:
    """Per-threshold counts and metrics plus the mean AP over thresholds."""

    results: Dict[float, ThresholdResult]
    ap_mean: float
    conf_min: float
    shift: int
    n_frames: int = 0

    def __getitem__(self, threshold: float) -> ThresholdResult:
        return self.results[round(threshold, 2)]

    @property
    def thresholds(self):
        return sorted(self.results)


def _frame_pairs(gt_frames, det_frames, shift):
    gt_seqs = _group_sequences(gt_frames)
    pairs = []
    for det in sorted(det_frames, key=lambda f: f.key):
        seq = gt_seqs.get(det.sequence_id)
        if seq is None:
            raise SequenceMismatch(f"detection sequence {det.sequence_id!r} has no ground truth")
        target = seq.get(det.frame_index + shift)
        if target is None:
            continue
        pairs.append((det, target))
    return pairs


def evaluate(
    gt_frames: Sequence[FrameRecord],
    det_frames: Sequence[FrameRecord],
    shift: int = 0,
    conf_min: float = DEFAULT_CONF_MIN,
    thresholds: Sequence[float] = IOU_THRESHOLDS,
    workers: int = 1,
) -> EvalReport:
    """Score detections against ground truth ``shift`` frames later.

    Frames whose ``t + shift`` partner is missing are skipped. Counts and the
    PR curve are pooled over all evaluated frames before AP is computed.
    """
    if shift < 0:
        raise ValueError("shift must be non-negative")
    thresholds = tuple(round(float(t), 2) for t in thresholds)
    pairs = _frame_pairs(gt_frames, det_frames, shift)

    def run(pair):
        det, gt = pair
        return match_frame_multi(det.dets or (), gt.gts, thresholds, conf_min)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_frame = list(pool.map(run, pairs))
    else:
        per_frame = [run(p) for p in pairs]

    total_gt = sum(len(gt.gts) for _, gt in pairs)
    results = {}
    for ti, t in enumerate(thresholds):
        tp = fp = fn = 0
        flags = []
        for frame in per_frame:
            m = frame[ti]
            tp, fp, fn = tp + m.tp, fp + m.fp, fn + m.fn
            flags.extend(m.flags)
        precision, recall, f1, undefined = precision_recall_f1(tp, fp, fn)
        if total_gt > 0:
            table = pr_table(flags, total_gt)
            ap = average_precision([(r, p) for _, r, p in table])
        else:
            table, ap = [], 0.0
            undefined.append("ap")
        results[t] = ThresholdResult(t, tp, fp, fn, precision, recall, f1, ap, undefined, table)
    ap_mean = float(np.mean([r.ap for r in results.values()])) if results else 0.0
    log.debug("evaluated %d frame pairs at shift %d", len(pairs), shift)
    return EvalReport(results, ap_mean, conf_min, shift, len(pairs))


def nms_rotated(boxes: Sequence[RotatedBox], iou_threshold: float = 0.65) -> List[int]:
    """Greedy rotated-IoU NMS; returns kept indices in descending confidence.

    A box is suppressed when its IoU with an already kept box exceeds
    ``iou_threshold``. Boxes without a confidence count as 0.
    """
    order = sorted(range(len(boxes)), key=lambda k: -(boxes[k].conf or 0.0))
    keep: List[int] = []
    for k in order:
        if all(rotated_iou(boxes[k], boxes[q]) <= iou_threshold for q in keep):
            keep.append(k)
    return keep


def shift_ground_truth(gt_frames: Sequence[FrameRecord], shift: int) -> List[FrameRecord]:
    """Relabel frames so that frame ``t`` carries the ground truth of ``t + shift``."""
    seqs = _group_sequences(gt_frames)
    out = []
    for seq_id, seq in seqs.items():
        for t, f in seq.items():
            if t - shift in seq:
                out.append(FrameRecord(seq_id, t - shift, f.gts))
    return out
