"""In-memory database of moving objects over either spatial index.

Both backends expose ``insert/remove/move/range_query/k_nearest_with_d2``
with the same ordering rule: ascending squared distance, ties by id.
Distances handed back to callers are true Euclidean ones; everything
internal compares squared distances.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .delaunay import Triangulation
from .errors import DuplicatePosition, EmptyIndex, UnknownId
from .geom import UNIT_SQUARE, Mbr, Point, check_point, dist2
from .rtree import RTree

BACKENDS = ("delaunay", "rtree")


@dataclass(frozen=True)
class MovingObject:
    id: int
    position: Point
    attrs: frozenset = field(default_factory=frozenset)


def make_index(backend: str, world: Mbr = UNIT_SQUARE, **opts):
    if backend == "delaunay":
        return Triangulation(world)
    if backend == "rtree":
        return RTree(**opts)
    raise ValueError(f"unknown backend {backend!r}")


class Dsd:
    def __init__(self, backend: str = "delaunay", world: Mbr = UNIT_SQUARE, **index_opts):
        self.backend = backend
        self.world = world
        self.index = make_index(backend, world, **index_opts)
        self.objects: dict[int, MovingObject] = {}
        self._at: dict[Point, int] = {}

    def __len__(self) -> int:
        return len(self.objects)

    def __contains__(self, oid) -> bool:
        return oid in self.objects

    def get(self, oid) -> MovingObject:
        try:
            return self.objects[oid]
        except KeyError:
            raise UnknownId(oid) from None

    # -- mutations -------------------------------------------------------

    def upsert(self, obj: MovingObject) -> None:
        p = check_point(obj.position, self.world)
        holder = self._at.get(p)
        if holder is not None and holder != obj.id:
            raise DuplicatePosition(f"{obj.id} at {p} collides with {holder}")
        old = self.objects.get(obj.id)
        if old is None:
            self.index.insert(obj.id, p)
        elif old.position != p:
            self.index.move(obj.id, p)
            del self._at[old.position]
        self._at[p] = obj.id
        self.objects[obj.id] = MovingObject(obj.id, p, frozenset(obj.attrs))

    def put(self, oid: int, p: Sequence[float], attrs: Iterable[str] = ()) -> None:
        self.upsert(MovingObject(oid, Point(float(p[0]), float(p[1])), frozenset(attrs)))

    def delete(self, oid) -> None:
        obj = self.objects.pop(oid, None)
        if obj is None:
            raise UnknownId(oid)
        del self._at[obj.position]
        self.index.remove(oid)

    # -- queries ---------------------------------------------------------

    def knn_d2(self, q: Sequence[float], k: int) -> list[tuple[float, int]]:
        if not self.objects:
            raise EmptyIndex("knn on empty database")
        return self.index.k_nearest_with_d2(q, k)

    def knn(self, q: Sequence[float], k: int) -> list[tuple[int, float]]:
        return [(oid, math.sqrt(d)) for d, oid in self.knn_d2(q, k)]

    def range(self, window: Sequence[float]) -> set:
        return self.index.range_query(Mbr(*window))

    def knn_filtered(self, q: Sequence[float], k: int, tag: str) -> list[int]:
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self.objects:
            return []
        objs = self.objects
        if self.backend == "rtree":
            hits = self.index.k_nearest_with_d2(q, k, accept=lambda oid: tag in objs[oid].attrs)
            return [oid for _, oid in hits]
        n = len(objs)
        kk = k
        while True:
            cand = self.index.k_nearest_with_d2(q, min(kk, n))
            tagged = [oid for _, oid in cand if tag in objs[oid].attrs]
            if len(tagged) >= k or len(cand) >= n:
                return tagged[:k]
            kk *= 2

    # -- oracles ---------------------------------------------------------

    def brute_force_knn_d2(self, q: Sequence[float], k: int) -> list[tuple[float, int]]:
        if not self.objects:
            raise EmptyIndex("knn on empty database")
        q = (float(q[0]), float(q[1]))
        return heapq.nsmallest(k, ((dist2(o.position, q), oid) for oid, o in self.objects.items()))

    def brute_force_knn(self, q: Sequence[float], k: int) -> list[tuple[int, float]]:
        return [(oid, math.sqrt(d)) for d, oid in self.brute_force_knn_d2(q, k)]

    def brute_force_range(self, window: Sequence[float]) -> set:
        xl, xh, yl, yh = window
        return {
            oid
            for oid, o in self.objects.items()
            if xl <= o.position[0] <= xh and yl <= o.position[1] <= yh
        }

    def brute_force_knn_filtered(self, q: Sequence[float], k: int, tag: str) -> list[int]:
        q = (float(q[0]), float(q[1]))
        keys = ((dist2(o.position, q), oid) for oid, o in self.objects.items() if tag in o.attrs)
        return [oid for _, oid in heapq.nsmallest(k, keys)]

    def audit(self) -> None:
        """Map and index hold the same ids at the same positions."""
        if set(self.index.ids()) != set(self.objects):
            raise AssertionError("index and object map disagree on ids")
        for oid, o in self.objects.items():
            if tuple(self.index.position(oid)) != tuple(o.position):
                raise AssertionError(f"position mismatch for {oid}")
        if len(self._at) != len(self.objects):
            raise AssertionError("position map out of sync")
