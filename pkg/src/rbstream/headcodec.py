"""Anchor-head decoding, target encoding and anchor assignment.

Grid layout: at level ``k`` with stride ``s`` the grid has ``image_size // s``
cells per side. A cell is addressed as ``(i, j)`` with ``i`` the column (x)
and ``j`` the row (y). Per-level raw tensors are stored as arrays of shape
``(n_anchors, rows, cols, 6)`` indexed ``[n, j, i]`` with the six channels
``tx, ty, tw, th, tangle, tconf``. Levels, anchors and cells are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import AssignmentConflict, CellMismatch, OutOfImage
from .geometry import RotatedBox

N_FIELDS = 6


def sigmoid(x):
    """Numerically stable logistic function for scalars or arrays."""
    if np.ndim(x) == 0:
        x = float(x)
        if x >= 0:
            return 1.0 / (1.0 + math.exp(-x))
        e = math.exp(x)
        return e / (1.0 + e)
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass(frozen=True)
class AnchorLevel:
    stride: int
    anchors: tuple  # ((w, h), ...)

    def __post_init__(self):
        object.__setattr__(self, "anchors", tuple((float(w), float(h)) for w, h in self.anchors))


@dataclass(frozen=True)
class AnchorConfig:
    """Strides, anchor shapes and angle range of the detection head.

    Decoded angles lie in ``[-beta, alpha - beta]``.
    """

    levels: tuple
    image_size: int = 640
    alpha: float = 2 * math.pi
    beta: float = math.pi

    def __post_init__(self):
        levels = tuple(lv if isinstance(lv, AnchorLevel) else AnchorLevel(**lv) for lv in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ValueError("at least one level is required")
        for lv in levels:
            if lv.stride <= 0 or self.image_size % lv.stride:
                raise ValueError(f"stride {lv.stride} must be positive and divide image_size {self.image_size}")
            if len(lv.anchors) != 3:
                raise ValueError(f"each level needs 3 anchors, got {len(lv.anchors)}")
            if any(w <= 0 or h <= 0 for w, h in lv.anchors):
                raise ValueError("anchor sizes must be positive")
        if not (self.alpha > 0):
            raise ValueError("alpha must be positive")

    def grid_size(self, level: int) -> int:
        return self.image_size // self.levels[level].stride

    @property
    def n_slots(self) -> int:
        return sum(len(lv.anchors) * self.grid_size(k) ** 2 for k, lv in enumerate(self.levels))

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "alpha": self.alpha,
            "beta": self.beta,
            "levels": [{"stride": lv.stride, "anchors": [list(a) for a in lv.anchors]} for lv in self.levels],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnchorConfig":
        return cls(
            levels=tuple(AnchorLevel(int(lv["stride"]), tuple(map(tuple, lv["anchors"]))) for lv in d["levels"]),
            image_size=int(d.get("image_size", 640)),
            alpha=float(d.get("alpha", 2 * math.pi)),
            beta=float(d.get("beta", math.pi)),
        )

    @classmethod
    def from_anchors(cls, anchors, strides=(8, 16, 32), **kwargs) -> "AnchorConfig":
        return cls(levels=tuple(AnchorLevel(s, a) for s, a in zip(strides, anchors)), **kwargs)


# Anchor sets used for the fisheye and the front-camera datasets. The fisheye
# set lists the same anchors for levels 2 and 3; kept as published.
WOODSCAPE_ANCHORS = (
    ((24, 45), (28, 24), (50, 77)),
    ((52, 39), (92, 145), (101, 69)),
    ((52, 39), (92, 145), (101, 69)),
)
ARGOVERSE_ANCHORS = (
    ((18, 33), (28, 61), (48, 68)),
    ((45, 101), (63, 113), (81, 134)),
    ((91, 144), (137, 178), (194, 250)),
)

PRESETS = {
    "woodscape": WOODSCAPE_ANCHORS,
    "argoverse": ARGOVERSE_ANCHORS,
}


def preset(name: str, **kwargs) -> AnchorConfig:
    return AnchorConfig.from_anchors(PRESETS[name], **kwargs)


class Slot(NamedTuple):
    level: int
    i: int
    j: int
    anchor: int


@dataclass(frozen=True)
class RawCellPrediction:
    tx: float
    ty: float
    tw: float
    th: float
    tangle: float
    tconf: float
    level: int = 0
    i: int = 0
    j: int = 0
    anchor: int = 0

    @property
    def slot(self) -> Slot:
        return Slot(self.level, self.i, self.j, self.anchor)

    @property
    def raw(self):
        return (self.tx, self.ty, self.tw, self.th, self.tangle, self.tconf)


class EncodedTarget(NamedTuple):
    tx: float  # sigmoid space, in [0, 1)
    ty: float
    tw: float  # raw space
    th: float
    angle: float  # decoded space
    conf: float


class Positive(NamedTuple):
    level: int
    i: int
    j: int
    anchor: int
    gt_index: int

    @property
    def slot(self) -> Slot:
        return Slot(self.level, self.i, self.j, self.anchor)


@dataclass
class TargetAssignment:
    """Positive slots; every other slot is negative."""

    positives: list = field(default_factory=list)

    def positive_slots(self) -> set:
        return {p.slot for p in self.positives}

    def negatives(self, cfg: AnchorConfig):
        taken = self.positive_slots()
        for k, lv in enumerate(cfg.levels):
            g = cfg.grid_size(k)
            for j in range(g):
                for i in range(g):
                    for n in range(len(lv.anchors)):
                        s = Slot(k, i, j, n)
                        if s not in taken:
                            yield s


def _check_slot(cfg: AnchorConfig, level: int, i: int, j: int, anchor: int):
    if not 0 <= level < len(cfg.levels):
        raise IndexError(f"level {level} out of range")
    g = cfg.grid_size(level)
    if not (0 <= i < g and 0 <= j < g):
        raise IndexError(f"cell ({i}, {j}) outside {g}x{g} grid at level {level}")
    if not 0 <= anchor < len(cfg.levels[level].anchors):
        raise IndexError(f"anchor {anchor} out of range")


def decode(raw: RawCellPrediction, cfg: AnchorConfig) -> RotatedBox:
    """Decode one raw prediction into a (non-canonical) rotated box."""
    _check_slot(cfg, raw.level, raw.i, raw.j, raw.anchor)
    lv = cfg.levels[raw.level]
    aw, ah = lv.anchors[raw.anchor]
    s = lv.stride
    return RotatedBox(
        cx=s * (raw.i + sigmoid(raw.tx)),
        cy=s * (raw.j + sigmoid(raw.ty)),
        w=aw * math.exp(raw.tw),
        h=ah * math.exp(raw.th),
        angle=cfg.alpha * sigmoid(raw.tangle) - cfg.beta,
        conf=sigmoid(raw.tconf),
    )


def decode_level(raw: np.ndarray, cfg: AnchorConfig, level: int) -> np.ndarray:
    """Decode a whole ``(n_anchors, rows, cols, 6)`` level tensor.

    Returns an array of the same shape holding ``cx, cy, w, h, angle, conf``.
    """
    raw = np.asarray(raw, dtype=float)
    lv = cfg.levels[level]
    g = cfg.grid_size(level)
    expected = (len(lv.anchors), g, g, N_FIELDS)
    if raw.shape != expected:
        raise ValueError(f"level {level} tensor must have shape {expected}, got {raw.shape}")
    s = lv.stride
    anchors = np.asarray(lv.anchors)
    jj, ii = np.meshgrid(np.arange(g), np.arange(g), indexing="ij")
    out = np.empty_like(raw)
    out[..., 0] = s * (ii[None] + sigmoid(raw[..., 0]))
    out[..., 1] = s * (jj[None] + sigmoid(raw[..., 1]))
    out[..., 2] = anchors[:, 0, None, None] * np.exp(raw[..., 2])
    out[..., 3] = anchors[:, 1, None, None] * np.exp(raw[..., 3])
    out[..., 4] = cfg.alpha * sigmoid(raw[..., 4]) - cfg.beta
    out[..., 5] = sigmoid(raw[..., 5])
    return out


def encode(gt: RotatedBox, slot: Slot, cfg: AnchorConfig) -> EncodedTarget:
    """Express ``gt`` as regression targets relative to ``slot``.

    Raises
    ------
    CellMismatch
        If the box center does not fall inside the slot's cell.
    """
    level, i, j, anchor = slot
    _check_slot(cfg, level, i, j, anchor)
    lv = cfg.levels[level]
    s = lv.stride
    tx = gt.cx / s - i
    ty = gt.cy / s - j
    if not (0.0 <= tx < 1.0 and 0.0 <= ty < 1.0):
        raise CellMismatch(f"center ({gt.cx}, {gt.cy}) not in cell ({i}, {j}) of stride {s}")
    aw, ah = lv.anchors[anchor]
    return EncodedTarget(tx, ty, math.log(gt.w / aw), math.log(gt.h / ah), gt.angle, 1.0)


def shape_iou(w1: float, h1: float, w2: float, h2: float) -> float:
    """IoU of two axis-aligned boxes sharing a center."""
    inter = min(w1, w2) * min(h1, h2)
    return inter / (w1 * h1 + w2 * h2 - inter)


def assign_targets(gts: Sequence[RotatedBox], cfg: AnchorConfig) -> TargetAssignment:
    """One positive slot per ground-truth box.

    The slot is the cell containing the box center, at the (level, anchor)
    whose anchor shape best matches ``(w, h)``; ties go to the lower level,
    then the lower anchor index. If that slot is already held by an earlier
    box, the next-best free (level, anchor) is used.
    """
    taken = set()
    positives = []
    size = cfg.image_size
    for g_idx, gt in enumerate(gts):
        if not (0 <= gt.cx < size and 0 <= gt.cy < size):
            raise OutOfImage(f"center ({gt.cx}, {gt.cy}) outside [0, {size})^2")
        ranked = []
        for k, lv in enumerate(cfg.levels):
            for n, (aw, ah) in enumerate(lv.anchors):
                ranked.append((-shape_iou(gt.w, gt.h, aw, ah), k, n))
        ranked.sort()
        for _, k, n in ranked:
            s = cfg.levels[k].stride
            slot = Slot(k, int(gt.cx // s), int(gt.cy // s), n)
            if slot not in taken:
                break
        else:
            raise AssignmentConflict(f"no free slot for ground truth {g_idx}")
        taken.add(slot)
        positives.append(Positive(*slot, g_idx))
    return TargetAssignment(positives)


def empty_raws(cfg: AnchorConfig, fill: float = 0.0) -> list:
    """Per-level raw tensors filled with ``fill``."""
    return [np.full((len(lv.anchors), cfg.grid_size(k), cfg.grid_size(k), N_FIELDS), fill) for k, lv in enumerate(cfg.levels)]
