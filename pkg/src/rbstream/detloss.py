"""Total detection loss over all anchor slots, with its analytic gradient."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .angleloss import AngleLossKind, angle_loss
from .exceptions import ProbabilityOutOfRange
from .geometry import RotatedBox
from .headcodec import AnchorConfig, TargetAssignment, encode, sigmoid


@dataclass(frozen=True)
class LossBreakdown:
    l_txty: float
    l_twth: float
    l_bangle: float
    l_bconf: float

    @property
    def l_total(self) -> float:
        return self.l_txty + self.l_twth + self.l_bangle + self.l_bconf


def bce(p: float, y: float) -> float:
    """Binary cross entropy of prediction ``p`` against target ``y``."""
    if not 0.0 < p < 1.0:
        raise ProbabilityOutOfRange(f"p must lie in (0, 1), got {p}")
    return -(y * math.log(p) + (1.0 - y) * math.log1p(-p))


def _softplus(t):
    return np.logaddexp(0.0, t)


def bce_logits(t, y):
    """``bce(sigmoid(t), y)`` computed without forming the probability."""
    t = np.asarray(t, dtype=float)
    return _softplus(t) - y * t


def total_loss(
    raws: Sequence[np.ndarray],
    assignment: TargetAssignment,
    gts: Sequence[RotatedBox],
    cfg: AnchorConfig,
    angle_kind: AngleLossKind = AngleLossKind(),
    return_grad: bool = False,
):
    """Sum of the center, size, angle and confidence losses.

    Parameters
    ----------
    raws : list of ndarray
        One ``(n_anchors, rows, cols, 6)`` tensor per level.
    assignment : TargetAssignment
    gts : sequence of RotatedBox
    cfg : AnchorConfig
    angle_kind : AngleLossKind
    return_grad : bool
        Also return the gradient with respect to every raw entry.

    Returns
    -------
    LossBreakdown, or (LossBreakdown, list of ndarray) if ``return_grad``.
    """
    raws = [np.asarray(r, dtype=float) for r in raws]
    if len(raws) != len(cfg.levels):
        raise ValueError(f"expected {len(cfg.levels)} level tensors, got {len(raws)}")
    grads = [np.zeros_like(r) for r in raws] if return_grad else None

    conf_target = [np.zeros(r.shape[:3]) for r in raws]
    positives = sorted(assignment.positives, key=lambda p: (p.level, p.j, p.i, p.anchor))
    l_txty = l_twth = l_bangle = 0.0
    for pos in positives:
        conf_target[pos.level][pos.anchor, pos.j, pos.i] = 1.0
        r = raws[pos.level][pos.anchor, pos.j, pos.i]
        tgt = encode(gts[pos.gt_index], pos.slot, cfg)

        l_txty += float(bce_logits(r[0], tgt.tx) + bce_logits(r[1], tgt.ty))
        dw, dh = r[2] - tgt.tw, r[3] - tgt.th
        l_twth += dw * dw + dh * dh

        sa = sigmoid(r[4])
        b_angle = cfg.alpha * sa - cfg.beta
        ang = angle_loss(angle_kind, b_angle, tgt.angle)
        l_bangle += ang.value

        if return_grad:
            g = grads[pos.level][pos.anchor, pos.j, pos.i]
            g[0] = sigmoid(r[0]) - tgt.tx
            g[1] = sigmoid(r[1]) - tgt.ty
            g[2] = 2.0 * dw
            g[3] = 2.0 * dh
            g[4] = ang.d_dt * cfg.alpha * sa * (1.0 - sa)

    l_bconf = 0.0
    for k, r in enumerate(raws):
        # (anchor, row, col) -> (row, col, anchor): row-major cells, anchors innermost
        terms = bce_logits(r[..., 5], conf_target[k]).transpose(1, 2, 0)
        l_bconf += float(np.sum(terms))
        if return_grad:
            grads[k][..., 5] = sigmoid(r[..., 5]) - conf_target[k]

    out = LossBreakdown(l_txty, l_twth, l_bangle, l_bconf)
    if return_grad:
        return out, grads
    return out


def numeric_grad(fn, raws: Sequence[np.ndarray], h: float = 1e-6, entries: Optional[list] = None) -> list:
    """Central-difference gradient of a scalar ``fn(raws)``.

    Only the listed ``(level, index_tuple)`` entries are probed when given;
    the rest of the returned arrays is NaN.
    """
    raws = [np.array(r, dtype=float) for r in raws]
    out = [np.full_like(r, np.nan) for r in raws]
    if entries is None:
        entries = [(k, idx) for k, r in enumerate(raws) for idx in np.ndindex(r.shape)]
    for k, idx in entries:
        orig = raws[k][idx]
        raws[k][idx] = orig + h
        fp = fn(raws)
        raws[k][idx] = orig - h
        fm = fn(raws)
        raws[k][idx] = orig
        out[k][idx] = (fp - fm) / (2.0 * h)
    return out
