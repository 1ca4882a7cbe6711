"""Static grid of zones, each with its own database: the fixed-zone baseline.

Cells are numbered ``row * cols + col`` from the lower left.  A point on a
shared boundary belongs to the lowest-numbered cell containing it, which
for a grid means the lower column and the lower row.
"""

from __future__ import annotations

import bisect
import heapq
import math
from typing import Sequence

from .dsd import Dsd
from .errors import EmptyIndex, UnknownId
from .geom import UNIT_SQUARE, Mbr, check_point, mindist2


class GridPartition:
    def __init__(self, cols: int, rows: int, world: Mbr = UNIT_SQUARE, backend: str = "delaunay"):
        if cols < 1 or rows < 1:
            raise ValueError("grid needs at least one column and one row")
        self.world = world
        self.cols = cols
        self.rows = rows
        w = world[1] - world[0]
        h = world[3] - world[2]
        # interior boundaries only; the outer edges come from the world
        self._xs = [world[0] + w * i / cols for i in range(1, cols)]
        self._ys = [world[2] + h * j / rows for j in range(1, rows)]
        xs = [world[0]] + self._xs + [world[1]]
        ys = [world[2]] + self._ys + [world[3]]
        self.cells = [
            Mbr(xs[c], xs[c + 1], ys[r], ys[r + 1]) for r in range(rows) for c in range(cols)
        ]
        self.zones = [Dsd(backend, world) for _ in self.cells]
        self._zone_of: dict[int, int] = {}
        self.zones_queried = 0

    def __len__(self) -> int:
        return len(self._zone_of)

    def zone_for_point(self, p: Sequence[float]) -> int:
        p = check_point(p, self.world)
        col = bisect.bisect_left(self._xs, p[0])
        row = bisect.bisect_left(self._ys, p[1])
        return row * self.cols + col

    def zone_of(self, oid) -> int:
        try:
            return self._zone_of[oid]
        except KeyError:
            raise UnknownId(oid) from None

    def loads(self) -> list[int]:
        return [len(z) for z in self.zones]

    # -- mutations -------------------------------------------------------

    def insert(self, oid, p: Sequence[float], attrs=()) -> None:
        z = self.zone_for_point(p)
        if oid in self._zone_of:
            self.move_object(oid, p)
            return
        self.zones[z].put(oid, p, attrs)
        self._zone_of[oid] = z

    def move_object(self, oid, p_new: Sequence[float]) -> None:
        old = self.zone_of(oid)
        new = self.zone_for_point(p_new)
        attrs = self.zones[old].get(oid).attrs
        if old == new:
            self.zones[old].put(oid, p_new, attrs)
            return
        self.zones[old].delete(oid)
        self.zones[new].put(oid, p_new, attrs)
        self._zone_of[oid] = new

    def remove(self, oid) -> None:
        z = self.zone_of(oid)
        self.zones[z].delete(oid)
        del self._zone_of[oid]

    # -- distributed queries ---------------------------------------------

    def range(self, window: Sequence[float]) -> set:
        xl, xh, yl, yh = window
        out = set()
        for i, cell in enumerate(self.cells):
            if cell[0] <= xh and xl <= cell[1] and cell[2] <= yh and yl <= cell[3]:
                self.zones_queried += 1
                out |= self.zones[i].range(window)
        return out

    def knn_d2(self, q: Sequence[float], k: int) -> list[tuple[float, int]]:
        """Visit cells by increasing min-distance, stopping once the next
        cell is strictly farther than the current k-th best."""
        if not self._zone_of:
            raise EmptyIndex("knn on empty grid")
        q = (float(q[0]), float(q[1]))
        order = sorted((mindist2(c, q), i) for i, c in enumerate(self.cells))
        best: list[tuple[float, int]] = []
        for d, i in order:
            if len(best) >= k and d > best[k - 1][0]:
                break
            zone = self.zones[i]
            self.zones_queried += 1
            if not len(zone):
                continue
            best = heapq.nsmallest(k, best + zone.knn_d2(q, k))
        return best

    def knn(self, q: Sequence[float], k: int) -> list[tuple[int, float]]:
        return [(oid, math.sqrt(d)) for d, oid in self.knn_d2(q, k)]

    def audit(self) -> None:
        seen: dict[int, int] = {}
        for i, z in enumerate(self.zones):
            z.audit()
            for oid, obj in z.objects.items():
                if oid in seen:
                    raise AssertionError(f"{oid} held by zones {seen[oid]} and {i}")
                seen[oid] = i
                if self.zone_for_point(obj.position) != i:
                    raise AssertionError(f"{oid} stored outside its cell")
        if seen != self._zone_of:
            raise AssertionError("zone map out of sync")
