"""JSON Lines annotation/detection/triplet files, report JSON and PR CSV.

Every writer emits UTF-8 with LF line endings and floats at 17 significant
digits, so ``save(load(save(x)))`` reproduces ``save(x)`` byte for byte.

Annotation line::

    {"seq":"s0","frame":3,"objects":[{"contour":[[x,y],...]},{"rbox":[cx,cy,w,h,angle]}]}

Objects may carry an optional ``"class"`` string, which is preserved but
not used by the evaluator.

Detection line::

    {"seq":"s0","frame":3,"dets":[[cx,cy,w,h,angle,conf],...]}
"""

from __future__ import annotations

import json
import math
import os
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from .exceptions import DegenerateContour, NonPositiveExtent, ParseError
from .geometry import RotatedBox, canonicalize, min_area_rect
from .streameval import EvalReport, FrameRecord, ThresholdResult, Triplet

PathLike = Union[str, os.PathLike]


@dataclass(frozen=True)
class AnnotationObject:
    contour: Optional[tuple] = None
    rbox: Optional[RotatedBox] = None
    cls: Optional[str] = None


@dataclass(frozen=True)
class AnnotationLine:
    seq: str
    frame: int
    objects: tuple = ()

    def to_frame(self) -> FrameRecord:
        gts = [o.rbox for o in self.objects if o.rbox is not None]
        return FrameRecord(self.seq, self.frame, gts)


@dataclass(frozen=True)
class DetectionLine:
    seq: str
    frame: int
    dets: tuple = ()

    def to_frame(self) -> FrameRecord:
        return FrameRecord(self.seq, self.frame, (), self.dets)


# -- number formatting -------------------------------------------------------


def fmt_float(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite value {x}")
    if x == 0.0:
        x = 0.0  # drop the sign of -0.0
    return format(x, ".17g")


def _dump(obj) -> str:
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if obj is None:
        return "null"
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k), ensure_ascii=False)}:{_dump(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_dump(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _box_list(b: RotatedBox, with_conf=False) -> list:
    vals = [float(v) for v in b.as_tuple()]
    if with_conf:
        vals.append(float(b.conf))
    return vals


# -- parsing helpers ---------------------------------------------------------


def _read_lines(src) -> Iterator[str]:
    if isinstance(src, (str, os.PathLike)):
        with open(src, encoding="utf-8", newline="") as fh:
            for line in fh:
                yield line.rstrip("\r\n")
    else:
        for line in src:
            yield line.rstrip("\r\n")


def _open_lines(src) -> Tuple[Iterator[str], str]:
    name = str(src) if isinstance(src, (str, os.PathLike)) else getattr(src, "name", "<stream>")
    return _read_lines(src), name


def _iter_json_lines(src) -> Iterator[Tuple[int, dict, str]]:
    lines, name = _open_lines(src)
    for lineno, text in enumerate(lines, start=1):
        if not text.strip():
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno, name) from None
        if not isinstance(obj, dict):
            raise ParseError("each line must be a JSON object", lineno, name)
        yield lineno, obj, name


def _number(v, what, lineno, name) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"{what} must be a number, got {v!r}", lineno, name)
    v = float(v)
    if not math.isfinite(v):
        raise ParseError(f"{what} must be finite", lineno, name)
    return v


def _header(obj, lineno, name) -> Tuple[str, int]:
    seq = obj.get("seq")
    frame = obj.get("frame")
    if not isinstance(seq, str):
        raise ParseError("'seq' must be a string", lineno, name)
    if isinstance(frame, bool) or not isinstance(frame, int) or frame < 0:
        raise ParseError("'frame' must be a non-negative integer", lineno, name)
    return seq, frame


def _parse_rbox(v, lineno, name, n=5) -> list:
    if not isinstance(v, list) or len(v) != n:
        raise ParseError(f"box must be a list of {n} numbers, got {v!r}", lineno, name)
    return [_number(x, "box field", lineno, name) for x in v]


def _make_box(vals, lineno, name, conf=None) -> RotatedBox:
    try:
        return canonicalize(RotatedBox(*vals[:5], conf=conf))
    except (NonPositiveExtent, ValueError) as exc:
        raise ParseError(str(exc), lineno, name) from None


# -- annotations ---------------------------------------------------------------


def iter_annotations(src) -> Iterator[AnnotationLine]:
    """Stream :class:`AnnotationLine` records; rboxes are canonicalised."""
    for lineno, obj, name in _iter_json_lines(src):
        seq, frame = _header(obj, lineno, name)
        raw_objs = obj.get("objects", [])
        if not isinstance(raw_objs, list):
            raise ParseError("'objects' must be a list", lineno, name)
        objs = []
        for o in raw_objs:
            if not isinstance(o, dict):
                raise ParseError("object entries must be JSON objects", lineno, name)
            cls = o.get("class")
            if cls is not None and not isinstance(cls, str):
                raise ParseError("'class' must be a string", lineno, name)
            if "rbox" in o:
                box = _make_box(_parse_rbox(o["rbox"], lineno, name), lineno, name)
                objs.append(AnnotationObject(rbox=box, cls=cls))
            elif "contour" in o:
                c = o["contour"]
                if not isinstance(c, list) or len(c) < 3:
                    raise ParseError("contour must list at least 3 points", lineno, name)
                pts = []
                for p in c:
                    if not isinstance(p, list) or len(p) != 2:
                        raise ParseError(f"contour point must be [x, y], got {p!r}", lineno, name)
                    pts.append((_number(p[0], "x", lineno, name), _number(p[1], "y", lineno, name)))
                objs.append(AnnotationObject(contour=tuple(pts), cls=cls))
            else:
                raise ParseError("object needs a 'contour' or an 'rbox'", lineno, name)
        yield AnnotationLine(seq, frame, tuple(objs))


def load_annotations(src) -> List[AnnotationLine]:
    return list(iter_annotations(src))


def annotation_to_json(line: AnnotationLine) -> str:
    objs = []
    for o in line.objects:
        d = {}
        if o.rbox is not None:
            d["rbox"] = _box_list(o.rbox)
        else:
            d["contour"] = [[float(x), float(y)] for x, y in o.contour]
        if o.cls is not None:
            d["class"] = o.cls
        objs.append(d)
    return _dump({"seq": line.seq, "frame": line.frame, "objects": objs})


def _write_lines(dst, lines: Iterable[str]):
    text = "".join(s + "\n" for s in lines)
    if isinstance(dst, (str, os.PathLike)):
        with open(dst, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        dst.write(text)


def save_annotations(dst, lines: Iterable[AnnotationLine]):
    _write_lines(dst, (annotation_to_json(a) for a in lines))


# -- detections ----------------------------------------------------------------


def iter_detections(src) -> Iterator[DetectionLine]:
    for lineno, obj, name in _iter_json_lines(src):
        seq, frame = _header(obj, lineno, name)
        raw = obj.get("dets", [])
        if not isinstance(raw, list):
            raise ParseError("'dets' must be a list", lineno, name)
        dets = []
        for d in raw:
            vals = _parse_rbox(d, lineno, name, n=6)
            if not 0.0 <= vals[5] <= 1.0:
                raise ParseError(f"conf must lie in [0, 1], got {vals[5]}", lineno, name)
            dets.append(_make_box(vals, lineno, name, conf=vals[5]))
        yield DetectionLine(seq, frame, tuple(dets))


def load_detections(src) -> List[DetectionLine]:
    return list(iter_detections(src))


def detection_to_json(line: DetectionLine) -> str:
    return _dump({"seq": line.seq, "frame": line.frame, "dets": [_box_list(b, True) for b in line.dets]})


def save_detections(dst, lines: Iterable[DetectionLine]):
    _write_lines(dst, (detection_to_json(d) for d in lines))


# -- triplets ------------------------------------------------------------------


def triplet_to_json(t: Triplet) -> str:
    return _dump(
        {
            "seq": t.f_t.sequence_id,
            "frame": t.f_t.frame_index,
            "prev_frame": t.f_tm1.frame_index,
            "target_frame": t.target_frame,
            "mode": t.mode.value,
            "gts": [_box_list(b) for b in t.g],
        }
    )


def save_triplets(dst, triplets: Iterable[Triplet]):
    _write_lines(dst, (triplet_to_json(t) for t in triplets))


def load_triplets(src) -> List[dict]:
    """Triplet lines as plain dicts with ``gts`` parsed into boxes."""
    out = []
    for lineno, obj, name in _iter_json_lines(src):
        seq, frame = _header(obj, lineno, name)
        try:
            prev, target, mode = int(obj["prev_frame"]), int(obj["target_frame"]), str(obj["mode"])
        except (KeyError, TypeError, ValueError):
            raise ParseError("triplet needs prev_frame, target_frame and mode", lineno, name) from None
        gts = [_make_box(_parse_rbox(b, lineno, name), lineno, name) for b in obj.get("gts", [])]
        out.append({"seq": seq, "frame": frame, "prev_frame": prev, "target_frame": target, "mode": mode, "gts": gts})
    return out


# -- conversion ----------------------------------------------------------------


def convert_annotations(lines: Iterable[AnnotationLine]) -> Tuple[List[AnnotationLine], Counter]:
    """Replace contours by canonical minimum-area rectangles.

    Degenerate contours are dropped. Returns the converted lines and a
    counter with keys ``converted``, ``kept`` and ``dropped``.
    """
    summary = Counter(converted=0, kept=0, dropped=0)
    out = []
    for line in lines:
        objs = []
        for o in line.objects:
            if o.rbox is not None:
                objs.append(AnnotationObject(rbox=canonicalize(o.rbox), cls=o.cls))
                summary["kept"] += 1
                continue
            try:
                box = min_area_rect(o.contour)
            except DegenerateContour:
                summary["dropped"] += 1
                continue
            objs.append(AnnotationObject(rbox=box, cls=o.cls))
            summary["converted"] += 1
        out.append(AnnotationLine(line.seq, line.frame, tuple(objs)))
    return out, summary


# -- reports -------------------------------------------------------------------


def threshold_key(t: float) -> str:
    return f"{t:.2f}"


def report_to_dict(report: EvalReport) -> dict:
    per = {}
    for t in report.thresholds:
        r = report.results[t]
        per[threshold_key(t)] = {
            "tp": r.tp,
            "fp": r.fp,
            "fn": r.fn,
            "precision": float(r.precision),
            "recall": float(r.recall),
            "f1": float(r.f1),
            "ap": float(r.ap),
            "undefined": list(r.undefined),
        }
    return {
        "shift": report.shift,
        "conf_min": float(report.conf_min),
        "n_frames": report.n_frames,
        "ap_mean": float(report.ap_mean),
        "thresholds": per,
    }


def dumps_report(report: EvalReport) -> str:
    return _dump(report_to_dict(report)) + "\n"


def save_report(dst, report: EvalReport):
    text = dumps_report(report)
    if isinstance(dst, (str, os.PathLike)):
        with open(dst, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        dst.write(text)


def load_report(src) -> EvalReport:
    if isinstance(src, (str, os.PathLike)):
        text, name = Path(src).read_text(encoding="utf-8"), str(src)
    else:
        text, name = src.read(), "<stream>"
    try:
        d = json.loads(text)
        results = {}
        for key, r in d["thresholds"].items():
            t = round(float(key), 2)
            results[t] = ThresholdResult(
                t, int(r["tp"]), int(r["fp"]), int(r["fn"]),
                float(r["precision"]), float(r["recall"]), float(r["f1"]), float(r["ap"]),
                list(r.get("undefined", [])),
            )
        return EvalReport(results, float(d["ap_mean"]), float(d["conf_min"]), int(d["shift"]), int(d.get("n_frames", 0)))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed report: {exc}", None, name) from None


def pr_csv(report: EvalReport, threshold: float) -> str:
    rows = ["conf,recall,precision"]
    for conf, rec, prec in report[threshold].pr:
        rows.append(f"{fmt_float(conf)},{fmt_float(rec)},{fmt_float(prec)}")
    return "\n".join(rows) + "\n"


def save_pr_curves(directory: PathLike, report: EvalReport) -> List[Path]:
    """Write ``pr_<threshold>.csv`` for every threshold of ``report``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in report.thresholds:
        p = directory / f"pr_{threshold_key(t)}.csv"
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(pr_csv(report, t))
        paths.append(p)
    return paths


def load_pr_csv(src) -> List[Tuple[float, float, float]]:
    lines, name = _open_lines(src)
    header = next(lines, "")
    if header.strip() != "conf,recall,precision":
        raise ParseError("expected header 'conf,recall,precision'", 1, name)
    rows = []
    for lineno, text in enumerate(lines, start=2):
        if not text:
            continue
        try:
            c, r, p = (float(v) for v in text.split(","))
        except ValueError:
            raise ParseError(f"bad CSV row {text!r}", lineno, name) from None
        rows.append((c, r, p))
    return rows


# -- frame helpers ---------------------------------------------------------------


def annotations_to_frames(lines: Iterable[AnnotationLine]) -> List[FrameRecord]:
    """Ground-truth frames; contour objects are converted first."""
    lines = list(lines)
    if any(o.contour is not None for a in lines for o in a.objects):
        lines, _ = convert_annotations(lines)
    return [a.to_frame() for a in lines]


def detections_to_frames(lines: Iterable[DetectionLine]) -> List[FrameRecord]:
    return [d.to_frame() for d in lines]
