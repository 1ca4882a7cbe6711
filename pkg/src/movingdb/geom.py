"""Exact-decision 2D predicates, points and bounding rectangles.

``orient2d`` and ``in_circle`` follow the usual adaptive scheme: the
determinant is first evaluated in floating point together with a certified
error bound (Shewchuk's stage-A bounds); only when the magnitude of the
result does not exceed the bound is it recomputed exactly with rationals.
Every finite double is a dyadic rational, so the fallback is exact.
"""

from __future__ import annotations

import math
from enum import IntEnum
from fractions import Fraction
from typing import Iterable, NamedTuple, Sequence, Union

from .errors import OutOfBounds

_EPS = 2.0 ** -53
CCW_ERRBOUND = (3.0 + 16.0 * _EPS) * _EPS
ICC_ERRBOUND = (10.0 + 96.0 * _EPS) * _EPS


class Sign(IntEnum):
    NEGATIVE = -1
    ZERO = 0
    POSITIVE = 1


class Point(NamedTuple):
    x: float
    y: float


class _MbrFields(NamedTuple):
    x_low: float
    x_high: float
    y_low: float
    y_high: float


class Mbr(_MbrFields):
    """Closed axis-aligned rectangle ``[x_low, x_high] x [y_low, y_high]``."""

    __slots__ = ()

    def __new__(cls, x_low: float, x_high: float, y_low: float, y_high: float):
        vals = (float(x_low), float(x_high), float(y_low), float(y_high))
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite rectangle {vals}")
        if vals[0] > vals[1] or vals[2] > vals[3]:
            raise ValueError(f"inverted rectangle {vals}")
        return super().__new__(cls, *vals)

    @classmethod
    def of_point(cls, p: Sequence[float]) -> "Mbr":
        return cls(p[0], p[0], p[1], p[1])

    @classmethod
    def around(cls, points: Iterable[Sequence[float]]) -> "Mbr":
        pts = list(points)
        if not pts:
            raise ValueError("no points")
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        return cls(min(xs), max(xs), min(ys), max(ys))

    def contains(self, p: Sequence[float]) -> bool:
        return contains(self, p)

    def intersects(self, other: "Mbr") -> bool:
        return intersects(self, other)

    def enlarge(self, other: Union["Mbr", Sequence[float]]) -> "Mbr":
        return enlarge(self, other)

    def area(self) -> float:
        return area(self)

    def center(self) -> Point:
        return Point((self.x_low + self.x_high) / 2.0, (self.y_low + self.y_high) / 2.0)

    def mindist2(self, p: Sequence[float]) -> float:
        return mindist2(self, p)

    def corners(self) -> list[Point]:
        """Corners in counter-clockwise order starting at the lower left."""
        return [
            Point(self.x_low, self.y_low),
            Point(self.x_high, self.y_low),
            Point(self.x_high, self.y_high),
            Point(self.x_low, self.y_high),
        ]


UNIT_SQUARE = Mbr(0.0, 1.0, 0.0, 1.0)


def check_point(p: Sequence[float], world: Mbr | None = None) -> Point:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise OutOfBounds(f"non-finite point ({x}, {y})")
    if world is not None and not contains(world, (x, y)):
        raise OutOfBounds(f"({x}, {y}) outside world {tuple(world)}")
    return Point(x, y)


# -- predicates ---------------------------------------------------------------


def orient2d_exact(ax, ay, bx, by, cx, cy) -> int:
    fax, fay = Fraction(ax), Fraction(ay)
    det = (fax - Fraction(cx)) * (Fraction(by) - Fraction(cy)) - (fay - Fraction(cy)) * (
        Fraction(bx) - Fraction(cx)
    )
    return (det > 0) - (det < 0)


def orient_sign(ax, ay, bx, by, cx, cy) -> int:
    """Sign of the doubled signed area as a plain int; the hot path of the walk."""
    detleft = (ax - cx) * (by - cy)
    detright = (ay - cy) * (bx - cx)
    det = detleft - detright
    bound = CCW_ERRBOUND * (abs(detleft) + abs(detright))
    if det > bound:
        return 1
    if -det > bound:
        return -1
    return orient2d_exact(ax, ay, bx, by, cx, cy)


def orient2d(a: Sequence[float], b: Sequence[float], c: Sequence[float]) -> Sign:
    """Positive iff ``a, b, c`` turn counter-clockwise."""
    return Sign(orient_sign(a[0], a[1], b[0], b[1], c[0], c[1]))


def in_circle_exact(ax, ay, bx, by, cx, cy, dx, dy) -> int:
    fdx, fdy = Fraction(dx), Fraction(dy)
    adx, ady = Fraction(ax) - fdx, Fraction(ay) - fdy
    bdx, bdy = Fraction(bx) - fdx, Fraction(by) - fdy
    cdx, cdy = Fraction(cx) - fdx, Fraction(cy) - fdy
    det = (
        (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
        + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
        + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady)
    )
    return (det > 0) - (det < 0)


def in_circle_sign(ax, ay, bx, by, cx, cy, dx, dy) -> int:
    adx = ax - dx
    bdx = bx - dx
    cdx = cx - dx
    ady = ay - dy
    bdy = by - dy
    cdy = cy - dy
    bdxcdy = bdx * cdy
    cdxbdy = cdx * bdy
    alift = adx * adx + ady * ady
    cdxady = cdx * ady
    adxcdy = adx * cdy
    blift = bdx * bdx + bdy * bdy
    adxbdy = adx * bdy
    bdxady = bdx * ady
    clift = cdx * cdx + cdy * cdy
    det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady)
    permanent = (
        (abs(bdxcdy) + abs(cdxbdy)) * alift
        + (abs(cdxady) + abs(adxcdy)) * blift
        + (abs(adxbdy) + abs(bdxady)) * clift
    )
    bound = ICC_ERRBOUND * permanent
    if det > bound:
        return 1
    if -det > bound:
        return -1
    return in_circle_exact(ax, ay, bx, by, cx, cy, dx, dy)


def in_circle(
    a: Sequence[float], b: Sequence[float], c: Sequence[float], d: Sequence[float]
) -> Sign:
    """Positive iff ``d`` is strictly inside the circle through CCW ``a, b, c``."""
    return Sign(in_circle_sign(a[0], a[1], b[0], b[1], c[0], c[1], d[0], d[1]))


def dist2(a: Sequence[float], b: Sequence[float]) -> float:
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    return dx * dx + dy * dy


# -- rectangles ---------------------------------------------------------------


def contains(m: Sequence[float], p: Sequence[float]) -> bool:
    return m[0] <= p[0] <= m[1] and m[2] <= p[1] <= m[3]


def intersects(m1: Sequence[float], m2: Sequence[float]) -> bool:
    return m1[0] <= m2[1] and m2[0] <= m1[1] and m1[2] <= m2[3] and m2[2] <= m1[3]


def enlarge(m: Mbr, other: Union[Mbr, Sequence[float]]) -> Mbr:
    if len(other) == 2:
        x, y = other
        return Mbr(min(m[0], x), max(m[1], x), min(m[2], y), max(m[3], y))
    return Mbr(min(m[0], other[0]), max(m[1], other[1]), min(m[2], other[2]), max(m[3], other[3]))


def area(m: Sequence[float]) -> float:
    return (m[1] - m[0]) * (m[3] - m[2])


def mindist2(m: Sequence[float], p: Sequence[float]) -> float:
    """Squared distance from ``p`` to the closed rectangle (0 inside)."""
    x, y = p[0], p[1]
    dx = m[0] - x if x < m[0] else (x - m[1] if x > m[1] else 0.0)
    dy = m[2] - y if y < m[2] else (y - m[3] if y > m[3] else 0.0)
    return dx * dx + dy * dy


# -- convex polygons ----------------------------------------------------------


def clip_halfplane(poly: list[Point], a: float, b: float, c: float) -> list[Point]:
    """Keep the part of a convex polygon where ``a*x + b*y <= c``."""
    out: list[Point] = []
    n = len(poly)
    if n == 0:
        return out
    for i in range(n):
        p = poly[i]
        q = poly[(i + 1) % n]
        fp = a * p[0] + b * p[1] - c
        fq = a * q[0] + b * q[1] - c
        if fp <= 0:
            out.append(p)
        if (fp < 0 < fq) or (fq < 0 < fp):
            t = fp / (fp - fq)
            out.append(Point(p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def bisector_clip(poly: list[Point], site: Sequence[float], other: Sequence[float]) -> list[Point]:
    """Clip ``poly`` to the points at least as close to ``site`` as to ``other``."""
    a = other[0] - site[0]
    b = other[1] - site[1]
    c = (other[0] ** 2 + other[1] ** 2 - site[0] ** 2 - site[1] ** 2) / 2.0
    return clip_halfplane(poly, a, b, c)


def polygon_area(poly: Sequence[Sequence[float]]) -> float:
    """Signed shoelace area (positive for CCW)."""
    s = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return s / 2.0
