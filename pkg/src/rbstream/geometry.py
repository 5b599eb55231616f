"""Rotated-rectangle geometry.

Angle convention: ``angle`` rotates the box's width axis from the image +x
axis toward the image +y axis. Image coordinates have their origin at the
upper-left corner with y growing downward, so a positive angle is a
clockwise turn on screen. "Counterclockwise" vertex order below means a
positive shoelace sum in raw (x, y) coordinates.

Everything here is a pure function over immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple, Optional, Sequence

from .exceptions import DegenerateContour, NonPositiveExtent

EPS_GEOM = 1e-9
MIN_AREA = 1e-12

HALF_PI = math.pi / 2


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class RotatedBox:
    """Rectangle given by center, extents and rotation.

    Parameters
    ----------
    cx, cy : float
        Center in pixels.
    w, h : float
        Width (along the rotated x axis) and height, both > 0.
    angle : float
        Rotation in radians, see module docstring.
    conf : float or None
        Detection confidence; ``None`` for ground truth.
    """

    cx: float
    cy: float
    w: float
    h: float
    angle: float
    conf: Optional[float] = None

    def __post_init__(self):
        vals = (self.cx, self.cy, self.w, self.h, self.angle)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box field in {vals}")
        if not (self.w > 0 and self.h > 0):
            raise NonPositiveExtent(f"box extents must be positive, got w={self.w}, h={self.h}")
        if self.conf is not None and not (0.0 <= self.conf <= 1.0):
            raise ValueError(f"conf must lie in [0, 1], got {self.conf}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self):
        return (self.cx, self.cy, self.w, self.h, self.angle)

    def is_canonical(self) -> bool:
        return self.w <= self.h and -HALF_PI <= self.angle < HALF_PI


@dataclass(frozen=True)
class ConvexPolygon:
    """Convex polygon with counterclockwise vertices.

    Clockwise input is reversed on construction.
    """

    vertices: tuple

    def __post_init__(self):
        verts = tuple(Point2(float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise DegenerateContour(f"polygon needs >= 3 vertices, got {len(verts)}")
        if _signed_area(verts) < 0:
            verts = verts[::-1]
        object.__setattr__(self, "vertices", verts)

    def __len__(self):
        return len(self.vertices)

    def __iter__(self):
        return iter(self.vertices)


def wrap_angle(angle: float) -> float:
    """Reduce an angle modulo pi into [-pi/2, pi/2)."""
    if -HALF_PI <= angle < HALF_PI:
        return angle
    out = angle - math.pi * math.floor((angle + HALF_PI) / math.pi)
    # floor() of a rounded quotient can land one period off
    if out >= HALF_PI:
        out -= math.pi
    elif out < -HALF_PI:
        out += math.pi
    return out


def canonicalize(box: RotatedBox) -> RotatedBox:
    """Return the representative of ``box`` with ``w <= h`` and angle in [-pi/2, pi/2).

    >>> canonicalize(RotatedBox(0, 0, 2, 1, 0)).as_tuple()
    (0, 0, 1, 2, -1.5707963267948966)
    """
    if not (box.w > 0 and box.h > 0):
        raise NonPositiveExtent(f"box extents must be positive, got w={box.w}, h={box.h}")
    w, h, angle = box.w, box.h, box.angle
    if w > h:
        w, h, angle = h, w, angle + HALF_PI
    angle = wrap_angle(angle)
    if w == box.w and h == box.h and angle == box.angle:
        return box
    return replace(box, w=w, h=h, angle=angle)


def corners(box: RotatedBox) -> list:
    """Four vertices of ``box`` in counterclockwise order."""
    c, s = math.cos(box.angle), math.sin(box.angle)
    hw, hh = box.w / 2.0, box.h / 2.0
    ux, uy = hw * c, hw * s
    vx, vy = -hh * s, hh * c
    cx, cy = box.cx, box.cy
    return [
        Point2(cx - ux - vx, cy - uy - vy),
        Point2(cx + ux - vx, cy + uy - vy),
        Point2(cx + ux + vx, cy + uy + vy),
        Point2(cx - ux + vx, cy - uy + vy),
    ]


def box_polygon(box: RotatedBox) -> ConvexPolygon:
    return ConvexPolygon(tuple(corners(box)))


def _signed_area(verts: Sequence) -> float:
    n = len(verts)
    acc = 0.0
    for k in range(n):
        x0, y0 = verts[k]
        x1, y1 = verts[(k + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * acc


def polygon_area(poly) -> float:
    """Shoelace area of a polygon (a ConvexPolygon or a vertex sequence)."""
    verts = poly.vertices if isinstance(poly, ConvexPolygon) else poly
    if len(verts) < 3:
        return 0.0
    return abs(_signed_area(verts))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _clip(subject: list, a: Point2, b: Point2) -> list:
    # keep the part of subject left of the directed edge a->b
    out = []
    n = len(subject)
    if n == 0:
        return out
    ex, ey = b[0] - a[0], b[1] - a[1]
    scale = math.hypot(ex, ey)
    tol = EPS_GEOM * max(scale, 1.0)

    def side(p):
        return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

    prev = subject[-1]
    prev_side = side(prev)
    for cur in subject:
        cur_side = side(cur)
        cur_in = cur_side >= -tol
        prev_in = prev_side >= -tol
        if cur_in:
            if not prev_in:
                out.append(_intersect(prev, cur, prev_side, cur_side))
            out.append(cur)
        elif prev_in:
            out.append(_intersect(prev, cur, prev_side, cur_side))
        prev, prev_side = cur, cur_side
    return out


def _intersect(p, q, sp, sq) -> Point2:
    t = sp / (sp - sq)
    return Point2(p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _dedupe(verts: list) -> list:
    out = []
    for v in verts:
        if out and abs(v[0] - out[-1][0]) <= EPS_GEOM and abs(v[1] - out[-1][1]) <= EPS_GEOM:
            continue
        out.append(v)
    while len(out) > 1 and abs(out[0][0] - out[-1][0]) <= EPS_GEOM and abs(out[0][1] - out[-1][1]) <= EPS_GEOM:
        out.pop()
    return out


def convex_intersection(a: ConvexPolygon, b: ConvexPolygon) -> Optional[ConvexPolygon]:
    """Intersection of two convex polygons (Sutherland-Hodgman).

    Returns ``None`` when the polygons are disjoint or only touch, i.e. the
    overlap has fewer than three vertices or area below ``MIN_AREA``.
    """
    out = list(a.vertices)
    clip = b.vertices
    m = len(clip)
    for k in range(m):
        out = _clip(out, clip[k], clip[(k + 1) % m])
        if not out:
            return None
    out = _dedupe(out)
    if len(out) < 3 or polygon_area(out) < MIN_AREA:
        return None
    return ConvexPolygon(tuple(out))


def rotated_iou(a: RotatedBox, b: RotatedBox) -> float:
    """Intersection over union of two rotated boxes, in [0, 1]."""
    inter = convex_intersection(box_polygon(a), box_polygon(b))
    if inter is None:
        return 0.0
    ia = polygon_area(inter)
    union = a.area + b.area - ia
    if union <= 0.0:
        return 0.0
    return min(max(ia / union, 0.0), 1.0)


def iou_matrix(boxes_a: Sequence[RotatedBox], boxes_b: Sequence[RotatedBox]):
    """Pairwise rotated IoU as a nested list ``[len(a)][len(b)]``."""
    polys_b = [box_polygon(b) for b in boxes_b]
    rows = []
    for a in boxes_a:
        pa = box_polygon(a)
        row = []
        for b, pb in zip(boxes_b, polys_b):
            # bounding-circle rejection
            r = 0.5 * (math.hypot(a.w, a.h) + math.hypot(b.w, b.h))
            if math.hypot(a.cx - b.cx, a.cy - b.cy) >= r:
                row.append(0.0)
                continue
            inter = convex_intersection(pa, pb)
            if inter is None:
                row.append(0.0)
                continue
            ia = polygon_area(inter)
            union = a.area + b.area - ia
            row.append(min(max(ia / union, 0.0), 1.0) if union > 0 else 0.0)
        rows.append(row)
    return rows


def _distinct_points(points: Iterable) -> list:
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    for x, y in pts:
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"non-finite contour point ({x}, {y})")
    return pts


def convex_hull(points: Iterable) -> ConvexPolygon:
    """Convex hull by Graham's scan in its monotone-chain form.

    Duplicate points are merged and collinear hull points dropped.

    Raises
    ------
    DegenerateContour
        Fewer than three distinct points, or all of them collinear.
    """
    pts = _distinct_points(points)
    if len(pts) < 3:
        raise DegenerateContour(f"need >= 3 distinct points, got {len(pts)}")

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]

    if len(hull) < 3:
        raise DegenerateContour("all contour points are collinear")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    extent = max(max(xs) - min(xs), max(ys) - min(ys))
    if polygon_area(hull) <= EPS_GEOM * extent * extent:
        raise DegenerateContour("all contour points are collinear")
    return ConvexPolygon(tuple(hull))


def min_area_rect(points: Iterable) -> RotatedBox:
    """Minimum-area enclosing rectangle by rotating calipers over hull edges.

    The optimal rectangle has one side flush with a hull edge, so only the
    hull's edge directions are tried. The result is canonical.
    """
    hull = convex_hull(points).vertices
    n = len(hull)
    best = None
    for k in range(n):
        p, q = hull[k], hull[(k + 1) % n]
        ex, ey = q[0] - p[0], q[1] - p[1]
        norm = math.hypot(ex, ey)
        if norm == 0.0:
            continue
        ux, uy = ex / norm, ey / norm
        # projections onto the edge direction u and its normal v = (-uy, ux)
        su = [x * ux + y * uy for x, y in hull]
        sv = [-x * uy + y * ux for x, y in hull]
        u0, u1 = min(su), max(su)
        v0, v1 = min(sv), max(sv)
        area = (u1 - u0) * (v1 - v0)
        if best is None or area < best[0]:
            best = (area, ux, uy, u0, u1, v0, v1)

    _, ux, uy, u0, u1, v0, v1 = best
    mu, mv = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
    cx = mu * ux - mv * uy
    cy = mu * uy + mv * ux
    box = RotatedBox(cx, cy, u1 - u0, v1 - v0, math.atan2(uy, ux))
    return canonicalize(box)
