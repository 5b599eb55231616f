"""Command line entry points.

Exit codes: 0 success, 2 bad input, 3 internal invariant violation.
Diagnostics go to stderr only.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import formats
from .angleloss import AngleLossKind, Norm, Variant, angle_loss
from .exceptions import ParseError, RBStreamError, SequenceMismatch
from .headcodec import AnchorConfig
from .streameval import DEFAULT_CONF_MIN, IOU_THRESHOLDS, Mode, build_triplets, evaluate

log = logging.getLogger("rbstream")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3


class InputError(RBStreamError, ValueError):
    pass


@dataclass
class RunConfig:
    conf_min: float = DEFAULT_CONF_MIN
    shift: int = 1
    iou_thresholds: tuple = IOU_THRESHOLDS
    angle_loss: str = "periodic/l1"
    anchors: Optional[str] = None
    report: Optional[str] = None
    pr_dir: Optional[str] = None
    workers: int = 1

    def validate(self) -> "RunConfig":
        if not 0.0 <= self.conf_min <= 1.0:
            raise InputError(f"conf_min must lie in [0, 1], got {self.conf_min}")
        if int(self.shift) != self.shift or self.shift < 0:
            raise InputError(f"shift must be a non-negative integer, got {self.shift}")
        self.iou_thresholds = tuple(float(t) for t in self.iou_thresholds)
        if not self.iou_thresholds or any(not 0.0 < t <= 1.0 for t in self.iou_thresholds):
            raise InputError("IoU thresholds must lie in (0, 1]")
        try:
            AngleLossKind.parse(self.angle_loss)
        except ValueError:
            raise InputError(f"unknown angle loss {self.angle_loss!r}") from None
        if self.workers < 1:
            raise InputError("workers must be >= 1")
        return self

    def anchor_config(self) -> Optional[AnchorConfig]:
        if self.anchors is None:
            return None
        try:
            return AnchorConfig.from_dict(json.loads(Path(self.anchors).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"cannot load anchor config {self.anchors}: {exc}") from None


def load_config(path: Optional[str], overrides: dict) -> RunConfig:
    values = {}
    if path:
        try:
            values = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from None
        known = {f.name for f in fields(RunConfig)}
        unknown = set(values) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise InputError(str(exc)) from None
    return cfg.validate()


def cmd_convert(args) -> int:
    lines = formats.load_annotations(args.inp)
    converted, summary = formats.convert_annotations(lines)
    formats.save_annotations(args.out, converted)
    print(f"converted={summary['converted']} kept={summary['kept']} dropped={summary['dropped']}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config, {
        "conf_min": args.conf_min,
        "shift": args.shift,
        "iou_thresholds": args.thresholds,
        "report": args.report,
        "pr_dir": args.pr_dir,
        "workers": args.workers,
    })
    if cfg.report is None:
        raise InputError("--report is required")
    gt = formats.annotations_to_frames(formats.iter_annotations(args.gt))
    det = formats.detections_to_frames(formats.iter_detections(args.det))
    report = evaluate(gt, det, int(cfg.shift), cfg.conf_min, cfg.iou_thresholds, cfg.workers)
    if not math.isclose(report.ap_mean, float(np.mean([r.ap for r in report.results.values()])), abs_tol=1e-15):
        raise AssertionError("ap_mean is not the mean of the per-threshold APs")
    formats.save_report(cfg.report, report)
    if cfg.pr_dir:
        formats.save_pr_curves(cfg.pr_dir, report)
    first = report.results[report.thresholds[0]]
    print(
        f"frames={report.n_frames} shift={report.shift} "
        f"P@{first.threshold:.2f}={first.precision:.5f} R@{first.threshold:.2f}={first.recall:.5f} "
        f"ap_mean={report.ap_mean:.5f}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_loss_table(args) -> int:
    if args.samples < 2:
        raise InputError("--samples must be >= 2")
    kind = AngleLossKind(Variant(args.kind), Norm(args.norm))
    xs = np.linspace(-2 * math.pi, 2 * math.pi, args.samples)
    rows = ["dt_minus_gt,value,d_dt"]
    for x in xs:
        ev = angle_loss(kind, float(x), 0.0)
        rows.append(f"{formats.fmt_float(x)},{formats.fmt_float(ev.value)},{formats.fmt_float(ev.d_dt)}")
    text = "\n".join(rows) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return EXIT_OK


def cmd_triplets(args) -> int:
    frames = formats.annotations_to_frames(formats.iter_annotations(args.inp))
    triplets = build_triplets(frames, Mode(args.mode))
    formats.save_triplets(args.out, triplets)
    print(f"triplets={len(triplets)} mode={args.mode}", file=sys.stderr)
    return EXIT_OK


def _thresholds(text: str):
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad threshold list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbstream", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="contour annotations -> rotated boxes")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("eval", help="(streaming) detection evaluation")
    p.add_argument("--gt", required=True)
    p.add_argument("--det", required=True)
    p.add_argument("--shift", type=int, default=None, help="frame offset k (default 1)")
    p.add_argument("--conf-min", type=float, default=None, help="default 0.01")
    p.add_argument("--thresholds", type=_thresholds, default=None, help="comma separated IoU thresholds")
    p.add_argument("--report", default=None)
    p.add_argument("--pr-dir", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON run config; flags override it")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("loss-table", help="sample an angle loss curve to CSV")
    p.add_argument("--kind", choices=[v.value for v in Variant], default="periodic")
    p.add_argument("--norm", choices=[n.value for n in Norm], default="l1")
    p.add_argument("--samples", type=int, default=721)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_loss_table)

    p = sub.add_parser("triplets", help="build (F_t, F_t-1, G) triplets from annotations")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--mode", choices=[m.value for m in Mode], default="offline")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_triplets)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except (ParseError, SequenceMismatch, InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
