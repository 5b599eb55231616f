"""Periodic angle regression losses and their analytic derivatives.

All losses take the predicted angle ``dt`` and the ground-truth angle ``gt``
in radians. Four variants exist:

``normal``
    Plain distance ``dt - gt``. Not periodic; a prediction of ``gt + pi``
    describes the same box yet gets loss ``pi``.
``test``
    ``mod(dt - gt, pi)``. Periodic, but a residual just below zero wraps to
    almost ``pi``.
``periodic``
    ``|mod(dt - gt - pi/2, pi) - pi/2|``, a triangle wave with zeros at
    ``dt - gt`` in ``pi * Z``.
``piecewise``
    ``periodic`` while ``delta = dt - gt - pi/2`` is negative and the
    constant ``pi/2`` once it is positive. ``gt`` is first reduced to its
    canonical representative in [-pi/2, pi/2) so that ``gt`` and ``gt + pi``
    give the same loss.
``piecewise-prose``
    Alternate reading of the piecewise loss in which the ``delta > 0`` side
    keeps the unit-slope periodic branch, pushing ``dt`` toward ``gt + pi``.

The L2 form of every variant is the square of its L1 value.

Derivatives are taken with respect to ``dt``. Where the loss has a kink or a
jump the derivative is reported as exactly 0.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import wrap_angle

HALF_PI = math.pi / 2


class Variant(str, enum.Enum):
    NORMAL = "normal"
    TEST = "test"
    PERIODIC = "periodic"
    PIECEWISE = "piecewise"
    PIECEWISE_PROSE = "piecewise-prose"


class Norm(str, enum.Enum):
    L1 = "l1"
    L2 = "l2"


@dataclass(frozen=True)
class AngleLossKind:
    variant: Variant = Variant.PERIODIC
    norm: Norm = Norm.L1

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "norm", Norm(self.norm))

    @classmethod
    def parse(cls, text: str) -> "AngleLossKind":
        """Parse ``"periodic"`` or ``"periodic/l2"`` style strings."""
        variant, _, norm = text.lower().partition("/")
        return cls(Variant(variant), Norm(norm or "l1"))

    def __str__(self):
        return f"{self.variant.value}/{self.norm.value}"


class LossEval(NamedTuple):
    value: float
    d_dt: float


def mod_pos(x: float, p: float) -> float:
    """Floored modulo, always in [0, p)."""
    r = x % p
    # x % p rounds up to p for tiny negative x
    return 0.0 if r >= p else r


def _l1_residual(variant: Variant, dt: float, gt: float):
    """Signed residual r (loss = |r|) and dr/d dt, or None at a kink."""
    if variant is Variant.NORMAL:
        r = dt - gt
        return r, 1.0
    if variant is Variant.TEST:
        x = dt - gt
        m = mod_pos(x, math.pi)
        kink = m == 0.0
        return m, (None if kink else 1.0)

    if variant is Variant.PIECEWISE:
        gt = wrap_angle(gt)
    delta = dt - gt - HALF_PI
    m = mod_pos(delta, math.pi)
    r = m - HALF_PI
    kink = m == 0.0
    if variant is Variant.PIECEWISE:
        if delta > 0.0:
            return -HALF_PI, 0.0
        if delta == 0.0:
            return r, None
    elif variant is Variant.PIECEWISE_PROSE and delta == 0.0:
        return r, None
    return r, (None if kink else 1.0)


def angle_loss(kind: AngleLossKind, dt: float, gt: float) -> LossEval:
    """Loss value and derivative with respect to ``dt``.

    Parameters
    ----------
    kind : AngleLossKind
    dt : float
        Predicted angle, radians. The decoder emits values in [-pi, pi].
    gt : float
        Ground-truth angle, radians, normally canonical.

    Returns
    -------
    LossEval
    """
    r, dr = _l1_residual(kind.variant, float(dt), float(gt))
    if kind.norm is Norm.L1:
        value = abs(r)
        if dr is None or r == 0.0:
            return LossEval(value, 0.0)
        return LossEval(value, math.copysign(1.0, r) * dr)
    value = r * r
    if dr is None:
        return LossEval(value, 0.0)
    return LossEval(value, 2.0 * r * dr)


def angle_loss_array(kind: AngleLossKind, dt, gt):
    """Vectorised :func:`angle_loss` over broadcastable arrays."""
    dt, gt = np.broadcast_arrays(np.asarray(dt, dtype=float), np.asarray(gt, dtype=float))
    values = np.empty(dt.shape)
    grads = np.empty(dt.shape)
    for idx in np.ndindex(dt.shape):
        values[idx], grads[idx] = angle_loss(kind, dt[idx], gt[idx])
    return values, grads


def kink_points(kind: AngleLossKind, gt: float, lo: float, hi: float) -> list:
    """Values of ``dt`` in [lo, hi] where the loss is not differentiable."""
    v = kind.variant
    out = []
    if v is Variant.NORMAL:
        if kind.norm is Norm.L1 and lo <= gt <= hi:
            out.append(gt)
        return out
    if v is Variant.PIECEWISE:
        gt = wrap_angle(gt)
    k0 = math.floor((lo - gt) / HALF_PI) - 1
    k1 = math.ceil((hi - gt) / HALF_PI) + 1
    for k in range(k0, k1 + 1):
        x = gt + k * HALF_PI
        if not lo <= x <= hi:
            continue
        on_zero = k % 2 == 0  # dt - gt in pi*Z
        if v is Variant.TEST:
            if on_zero:
                out.append(x)
        elif on_zero:
            # periodic minimum; smooth for L2
            if kind.norm is Norm.L1:
                out.append(x)
        else:
            out.append(x)
    return sorted(out)
