"""Incremental Delaunay triangulation used as a dynamic spatial index.

Faces live in flat arrays: ``_fv[3*f + i]`` is the i-th vertex of face ``f``
(counter-clockwise) and ``_fn[3*f + i]`` the face across the edge opposite
that vertex.  The convex hull is closed with a synthetic infinite vertex
(handle 0), so every hull edge is shared with an infinite face and the walk
never has to special-case the boundary.

Insertion finds the faces whose circumcircle strictly contains the new
point (Bowyer-Watson cavity, seeded by the walk) and stars the cavity from
the new vertex.  Cocircular configurations are treated as legal, so the
triangulation produced for a degenerate point set is reproducible.
Deletion re-triangulates the star-shaped hole by clipping Delaunay ears.

Point sets with fewer than three points, or with all points on a line,
have no triangle.  The index then runs in *chain mode*: only vertex
records are kept and queries scan linearly.

k-nearest search expands best-first over Delaunay edges from the nearest
neighbour.  The set of objects within any distance of a query point is
connected in the Delaunay graph and contains the nearest neighbour, so an
expansion that keeps popping while the frontier still holds a vertex no
farther than the current k-th best cannot miss an answer, ties included.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Hashable, Iterable, Iterator, Optional, Sequence

from .errors import DuplicateId, DuplicatePosition, EmptyIndex, OutOfBounds, UnknownId
from .geom import (
    Mbr,
    Point,
    bisector_clip,
    CCW_ERRBOUND,
    check_point,
    dist2,
    orient2d_exact,
    in_circle_sign,
    orient_sign,
)

INF = 0
_NEXT = (1, 2, 0)
_PREV = (2, 0, 1)
# edges to test in a face, keyed by the edge the walk entered through
_ORDER = {-1: (0, 1, 2), 0: (1, 2), 1: (2, 0), 2: (0, 1)}

VERTEX = "vertex"
EDGE = "edge"
FACE = "face"
OUTSIDE = "outside"


@dataclass(frozen=True)
class Location:
    """Result of a point location.

    ``ids`` holds the object ids of the hit vertex, edge endpoints or face
    corners (for ``outside``: the hull edge that sees the point).
    """

    kind: str
    ids: tuple
    face: int = -1


class Triangulation:
    def __init__(self, world: Optional[Mbr] = None):
        self.world = world
        self._x: list[float] = [0.0]
        self._y: list[float] = [0.0]
        self._vface: list[int] = [-1]
        self._vid: list = [None]
        self._handle: dict = {}
        self._free_v: list[int] = []
        self._pos: dict = {}
        self._fv: list[int] = []
        self._fn: list[int] = []
        self._alive: list[bool] = []
        self._free_f: list[int] = []
        self._nfinite = 0
        self._tri = False
        self._last = -1
        self.walk_steps = 0
        self.walk_count = 0

    # -- basic accessors -------------------------------------------------

    def __len__(self) -> int:
        return len(self._handle)

    def __contains__(self, oid) -> bool:
        return oid in self._handle

    @property
    def is_degenerate(self) -> bool:
        """True while no triangle exists (n < 3 or all points collinear)."""
        return not self._tri

    def ids(self) -> Iterator:
        return iter(self._handle)

    def handle(self, oid) -> int:
        try:
            return self._handle[oid]
        except KeyError:
            raise UnknownId(oid) from None

    def position(self, oid) -> Point:
        h = self.handle(oid)
        return Point(self._x[h], self._y[h])

    def id_at(self, p: Sequence[float]):
        """Id of the object stored exactly at ``p``, or ``None``."""
        h = self._pos.get((float(p[0]), float(p[1])))
        return None if h is None else self._vid[h]

    def walk_length_mean(self) -> float:
        return self.walk_steps / self.walk_count if self.walk_count else 0.0

    def reset_walk_stats(self) -> None:
        self.walk_steps = 0
        self.walk_count = 0

    # -- face storage ----------------------------------------------------

    def _new_face(self, a: int, b: int, c: int) -> int:
        if self._free_f:
            f = self._free_f.pop()
            k = 3 * f
            self._fv[k] = a
            self._fv[k + 1] = b
            self._fv[k + 2] = c
            self._alive[f] = True
        else:
            f = len(self._alive)
            self._fv.extend((a, b, c))
            self._fn.extend((-1, -1, -1))
            self._alive.append(True)
        if a and b and c:
            self._nfinite += 1
        return f

    def _kill_face(self, f: int) -> None:
        k = 3 * f
        if self._fv[k] and self._fv[k + 1] and self._fv[k + 2]:
            self._nfinite -= 1
        self._alive[f] = False
        self._free_f.append(f)

    def _is_infinite(self, f: int) -> bool:
        k = 3 * f
        fv = self._fv
        return fv[k] == INF or fv[k + 1] == INF or fv[k + 2] == INF

    def _link_faces(self, faces: Sequence[int], outer: dict) -> None:
        """Set adjacency of freshly created ``faces``.

        ``outer`` maps a directed edge ``(s, t)`` of a new face to the
        surviving face on its other side.
        """
        fv, fn = self._fv, self._fn
        edges = {}
        for f in faces:
            k = 3 * f
            for i in range(3):
                edges[(fv[k + _NEXT[i]], fv[k + _PREV[i]])] = k + i
        for (s, t), slot in edges.items():
            twin = edges.get((t, s))
            if twin is not None:
                fn[slot] = twin // 3
                continue
            g = outer[(s, t)]
            fn[slot] = g
            kg = 3 * g
            for j in range(3):
                w = fv[kg + j]
                if w != s and w != t:
                    fn[kg + j] = slot // 3
                    break
        for f in faces:
            k = 3 * f
            for i in range(3):
                self._vface[fv[k + i]] = f

    # -- vertex storage --------------------------------------------------

    def _new_vertex(self, oid, x: float, y: float) -> int:
        if self._free_v:
            h = self._free_v.pop()
            self._x[h] = x
            self._y[h] = y
            self._vface[h] = -1
            self._vid[h] = oid
        else:
            h = len(self._x)
            self._x.append(x)
            self._y.append(y)
            self._vface.append(-1)
            self._vid.append(oid)
        self._handle[oid] = h
        self._pos[(x, y)] = h
        return h

    def _drop_vertex(self, h: int) -> None:
        oid = self._vid[h]
        del self._handle[oid]
        del self._pos[(self._x[h], self._y[h])]
        self._vid[h] = None
        self._vface[h] = -1
        self._free_v.append(h)

    def _handles(self) -> list[int]:
        return list(self._handle.values())

    # -- predicates with the infinite vertex -----------------------------

    def _conflict(self, f: int, px: float, py: float) -> bool:
        k = 3 * f
        fv = self._fv
        a, b, c = fv[k], fv[k + 1], fv[k + 2]
        X, Y = self._x, self._y
        if a and b and c:
            return in_circle_sign(X[a], Y[a], X[b], Y[b], X[c], Y[c], px, py) > 0
        if a == INF:
            u, w = b, c
        elif b == INF:
            u, w = c, a
        else:
            u, w = a, b
        o = orient_sign(X[u], Y[u], X[w], Y[w], px, py)
        if o:
            return o > 0
        ux, uy, wx, wy = X[u], Y[u], X[w], Y[w]
        if ux != wx:
            return min(ux, wx) < px < max(ux, wx)
        return min(uy, wy) < py < max(uy, wy)

    # -- walking ---------------------------------------------------------

    def _finite_face_of(self, v: int) -> int:
        f = self._vface[v]
        if not self._is_infinite(f):
            return f
        fv, fn = self._fv, self._fn
        start = f
        while True:
            k = 3 * f
            i = 0 if fv[k] == v else (1 if fv[k + 1] == v else 2)
            f = fn[k + _NEXT[i]]
            if not self._is_infinite(f):
                return f
            if f == start:
                raise RuntimeError("vertex without finite face")

    def _start_vertex(self, hint: Optional[int]) -> int:
        if hint is not None and hint > 0 and self._vid[hint] is not None:
            return hint
        if self._last > 0 and self._vid[self._last] is not None:
            return self._last
        return next(iter(self._handle.values()))

    def _walk(self, px: float, py: float, hint: Optional[int] = None):
        """Visibility walk; returns ``(kind, face, index)``.

        For ``EDGE`` the index is the vertex opposite the hit edge, for
        ``VERTEX`` the index of the hit vertex; for ``OUTSIDE`` the face is
        an infinite face whose hull edge strictly sees the point.
        """
        fv, fn, X, Y = self._fv, self._fn, self._x, self._y
        f = self._finite_face_of(self._start_vertex(hint))
        entry = -1
        steps = 0
        limit = len(self._alive) + 3
        bound_k = CCW_ERRBOUND
        while True:
            steps += 1
            if steps > limit:
                self.walk_steps += steps
                self.walk_count += 1
                return self._scan_locate(px, py)
            k = 3 * f
            o0 = o1 = o2 = 1
            nxt = -1
            for j in _ORDER[entry]:
                a = fv[k + _NEXT[j]]
                b = fv[k + _PREV[j]]
                ax = X[a] - px
                ay = Y[a] - py
                bx = X[b] - px
                by = Y[b] - py
                left = ax * by
                right = ay * bx
                det = left - right
                bound = bound_k * (abs(left) + abs(right))
                if det > bound:
                    s = 1
                elif -det > bound:
                    s = -1
                else:
                    s = orient2d_exact(X[a], Y[a], X[b], Y[b], px, py)
                if s < 0:
                    nxt = j
                    break
                if j == 0:
                    o0 = s
                elif j == 1:
                    o1 = s
                else:
                    o2 = s
            if nxt >= 0:
                g = fn[k + nxt]
                kg = 3 * g
                if fv[kg] == INF or fv[kg + 1] == INF or fv[kg + 2] == INF:
                    self.walk_steps += steps
                    self.walk_count += 1
                    return OUTSIDE, g, -1
                entry = 0 if fn[kg] == f else (1 if fn[kg + 1] == f else 2)
                f = g
                continue
            self.walk_steps += steps
            self.walk_count += 1
            return self._classify(f, [o0, o1, o2])

    @staticmethod
    def _classify(f: int, o: list[int]):
        zeros = [j for j in range(3) if o[j] == 0]
        if not zeros:
            return FACE, f, -1
        if len(zeros) == 1:
            return EDGE, f, zeros[0]
        j = 3 - zeros[0] - zeros[1]
        return VERTEX, f, j

    def _scan_locate(self, px: float, py: float):
        fv, X, Y = self._fv, self._x, self._y
        for f, alive in enumerate(self._alive):
            if not alive or self._is_infinite(f):
                continue
            k = 3 * f
            o = []
            for j in range(3):
                a = fv[k + _NEXT[j]]
                b = fv[k + _PREV[j]]
                o.append(orient_sign(X[a], Y[a], X[b], Y[b], px, py))
            if min(o) >= 0:
                return self._classify(f, o)
        for f, alive in enumerate(self._alive):
            if alive and self._is_infinite(f) and self._conflict(f, px, py):
                return OUTSIDE, f, -1
        raise RuntimeError("point location failed")

    def locate(self, p: Sequence[float], hint=None) -> Location:
        """Locate ``p``; ``hint`` is an object id to start the walk from."""
        if not self._handle:
            raise EmptyIndex("locate on empty triangulation")
        px, py = float(p[0]), float(p[1])
        h = self._handle.get(hint) if hint is not None else None
        if not self._tri:
            hit = self._pos.get((px, py))
            if hit is not None:
                return Location(VERTEX, (self._vid[hit],))
            return Location(OUTSIDE, ())
        kind, f, i = self._walk(px, py, h)
        k = 3 * f
        vid, fv = self._vid, self._fv
        if kind == FACE:
            return Location(FACE, tuple(vid[fv[k + j]] for j in range(3)), f)
        if kind == EDGE:
            return Location(EDGE, (vid[fv[k + _NEXT[i]]], vid[fv[k + _PREV[i]]]), f)
        if kind == VERTEX:
            return Location(VERTEX, (vid[fv[k + i]],), f)
        hull = tuple(vid[fv[k + j]] for j in range(3) if fv[k + j] != INF)
        return Location(OUTSIDE, hull, f)

    # -- insertion -------------------------------------------------------

    def insert(self, oid, p: Sequence[float]) -> int:
        if oid in self._handle:
            raise DuplicateId(oid)
        pt = check_point(p, self.world)
        if (pt.x, pt.y) in self._pos:
            raise DuplicatePosition(tuple(pt))
        h = self._new_vertex(oid, pt.x, pt.y)
        if self._tri:
            self._insert_vertex(h, self._start_vertex(None))
        else:
            self._maybe_build()
        self._last = h
        return h

    def _insert_vertex(self, h: int, hint: int) -> None:
        px, py = self._x[h], self._y[h]
        kind, f, i = self._walk(px, py, hint)
        if kind == VERTEX:
            raise DuplicatePosition((px, py))
        fv, fn = self._fv, self._fn
        seeds = [f]
        if kind == EDGE:
            seeds.append(fn[3 * f + i])
        conflict = set(seeds)
        stack = list(seeds)
        boundary = []
        conflict_test = self._conflict
        while stack:
            g = stack.pop()
            k = 3 * g
            for j in range(3):
                n = fn[k + j]
                if n in conflict:
                    continue
                if conflict_test(n, px, py):
                    conflict.add(n)
                    stack.append(n)
                else:
                    boundary.append((fv[k + _NEXT[j]], fv[k + _PREV[j]], n))
        # a face found as non-conflicting from one side may have been added
        # later from another side; drop those edges
        boundary = [e for e in boundary if e[2] not in conflict]
        for g in conflict:
            self._kill_face(g)
        starts = {}
        ends = {}
        new_faces = []
        for a, b, n in boundary:
            nf = self._new_face(h, a, b)
            new_faces.append(nf)
            starts[a] = nf
            ends[b] = nf
            k = 3 * nf
            fn[k] = n
            kn = 3 * n
            for j in range(3):
                w = fv[kn + j]
                if w != a and w != b:
                    fn[kn + j] = nf
                    break
        vface = self._vface
        for nf in new_faces:
            k = 3 * nf
            a = fv[k + 1]
            b = fv[k + 2]
            fn[k + 1] = starts[b]
            fn[k + 2] = ends[a]
            vface[a] = nf
        vface[h] = new_faces[0]

    def _maybe_build(self) -> None:
        hs = self._handles()
        if len(hs) < 3:
            return
        X, Y = self._x, self._y
        a = hs[0]
        b = hs[1]
        c = None
        for w in hs[2:]:
            if orient_sign(X[a], Y[a], X[b], Y[b], X[w], Y[w]) != 0:
                c = w
                break
        if c is None:
            return
        self._build(a, b, c, [w for w in hs if w not in (a, b, c)])

    def _build(self, a: int, b: int, c: int, rest: Iterable[int]) -> None:
        X, Y = self._x, self._y
        if orient_sign(X[a], Y[a], X[b], Y[b], X[c], Y[c]) < 0:
            b, c = c, b
        self._fv, self._fn, self._alive, self._free_f = [], [], [], []
        self._nfinite = 0
        faces = [
            self._new_face(a, b, c),
            self._new_face(c, b, INF),
            self._new_face(a, c, INF),
            self._new_face(b, a, INF),
        ]
        self._link_faces(faces, {})
        self._tri = True
        last = c
        for w in rest:
            self._insert_vertex(w, last)
            last = w

    def _to_chain(self) -> None:
        self._tri = False
        self._fv, self._fn, self._alive, self._free_f = [], [], [], []
        self._nfinite = 0
        for h in self._handle.values():
            self._vface[h] = -1

    # -- removal ---------------------------------------------------------

    def remove(self, oid) -> None:
        h = self.handle(oid)
        if not self._tri:
            self._drop_vertex(h)
            self._last = -1
            return
        if len(self._handle) <= 3:
            self._drop_vertex(h)
            self._to_chain()
            self._last = -1
            return
        touched = self._remove_vertex(h)
        self._drop_vertex(h)
        if self._nfinite == 0:
            self._to_chain()
            self._last = -1
        else:
            self._last = touched

    def _star(self, v: int):
        """Faces around ``v`` in CCW order with their link vertices and outer faces."""
        fv, fn = self._fv, self._fn
        f0 = self._vface[v]
        faces, link, outer = [], [], []
        f = f0
        while True:
            k = 3 * f
            i = 0 if fv[k] == v else (1 if fv[k + 1] == v else 2)
            faces.append(f)
            link.append(fv[k + _NEXT[i]])
            outer.append(((fv[k + _NEXT[i]], fv[k + _PREV[i]]), fn[k + i]))
            f = fn[k + _NEXT[i]]
            if f == f0:
                return faces, link, outer

    def _remove_vertex(self, v: int) -> int:
        faces, link, outer = self._star(v)
        X, Y = self._x, self._y
        new_tris: list[tuple[int, int, int]] = []
        if INF in link:
            k = link.index(INF)
            chain = link[k + 1:] + link[:k]
            pts = list(chain)
            lo = 1
        else:
            chain = list(link)
            pts = list(link)
            lo = None

        def is_ear(a, b, c):
            if orient_sign(X[a], Y[a], X[b], Y[b], X[c], Y[c]) <= 0:
                return False
            for w in pts:
                if w == a or w == b or w == c:
                    continue
                if in_circle_sign(X[a], Y[a], X[b], Y[b], X[c], Y[c], X[w], Y[w]) > 0:
                    return False
            return True

        if lo is None:
            poly = chain
            while len(poly) > 3:
                n = len(poly)
                for i in range(n):
                    a, b, c = poly[i - 1], poly[i], poly[(i + 1) % n]
                    if is_ear(a, b, c):
                        new_tris.append((a, b, c))
                        del poly[i]
                        break
                else:
                    raise RuntimeError("hole re-triangulation failed")
            new_tris.append((poly[0], poly[1], poly[2]))
        else:
            poly = chain
            progress = True
            while progress and len(poly) > 2:
                progress = False
                for i in range(1, len(poly) - 1):
                    a, b, c = poly[i - 1], poly[i], poly[i + 1]
                    if is_ear(a, b, c):
                        new_tris.append((a, b, c))
                        del poly[i]
                        progress = True
                        break
            for i in range(len(poly) - 1):
                new_tris.append((poly[i], poly[i + 1], INF))
        for f in faces:
            self._kill_face(f)
        created = [self._new_face(a, b, c) for a, b, c in new_tris]
        self._link_faces(created, dict(outer))
        return next(w for w in link if w != INF)

    # -- moves -----------------------------------------------------------

    def move(self, oid, p_new: Sequence[float]) -> None:
        h = self.handle(oid)
        pt = check_point(p_new, self.world)
        if (pt.x, pt.y) == (self._x[h], self._y[h]):
            self._last = h
            return
        if (pt.x, pt.y) in self._pos:
            raise DuplicatePosition(tuple(pt))
        self.remove(oid)
        self.insert(oid, pt)

    # -- adjacency -------------------------------------------------------

    def _neighbor_handles(self, v: int) -> list[int]:
        if not self._tri:
            return self._chain_neighbors(v)
        fv, fn = self._fv, self._fn
        f0 = self._vface[v]
        out = []
        f = f0
        while True:
            k = 3 * f
            i = 0 if fv[k] == v else (1 if fv[k + 1] == v else 2)
            w = fv[k + _NEXT[i]]
            if w != INF:
                out.append(w)
            f = fn[k + _NEXT[i]]
            if f == f0:
                return out

    def _chain_neighbors(self, v: int) -> list[int]:
        X, Y = self._x, self._y
        order = sorted(self._handle.values(), key=lambda h: (X[h], Y[h]))
        i = order.index(v)
        out = []
        if i > 0:
            out.append(order[i - 1])
        if i + 1 < len(order):
            out.append(order[i + 1])
        return out

    def neighbors(self, oid) -> set:
        h = self.handle(oid)
        vid = self._vid
        return {vid[w] for w in self._neighbor_handles(h)}

    def edges(self) -> set[frozenset]:
        vid = self._vid
        if not self._tri:
            X, Y = self._x, self._y
            order = sorted(self._handle.values(), key=lambda h: (X[h], Y[h]))
            return {frozenset((vid[a], vid[b])) for a, b in zip(order, order[1:])}
        out = set()
        fv = self._fv
        for f, alive in enumerate(self._alive):
            if not alive:
                continue
            k = 3 * f
            for i in range(3):
                a, b = fv[k + _NEXT[i]], fv[k + _PREV[i]]
                if a and b:
                    out.add(frozenset((vid[a], vid[b])))
        return out

    def finite_faces(self) -> list[tuple]:
        vid, fv = self._vid, self._fv
        out = []
        for f, alive in enumerate(self._alive):
            if alive and not self._is_infinite(f):
                k = 3 * f
                out.append((vid[fv[k]], vid[fv[k + 1]], vid[fv[k + 2]]))
        return out

    def hull_size(self) -> int:
        if not self._tri:
            return 0
        return sum(1 for f, alive in enumerate(self._alive) if alive and self._is_infinite(f))

    # -- queries ---------------------------------------------------------

    def _key(self, h: int, qx: float, qy: float):
        dx = self._x[h] - qx
        dy = self._y[h] - qy
        return (dx * dx + dy * dy, self._vid[h])

    def _nearest_handle(self, qx: float, qy: float, hint: Optional[int] = None) -> int:
        if not self._handle:
            raise EmptyIndex("nearest neighbour on empty index")
        if not self._tri:
            return min(self._handle.values(), key=lambda h: self._key(h, qx, qy))
        kind, f, i = self._walk(qx, qy, hint)
        fv = self._fv
        k = 3 * f
        if kind == VERTEX:
            self._last = fv[k + i]
            return fv[k + i]
        cands = [fv[k + j] for j in range(3) if fv[k + j] != INF]
        cur = min(cands, key=lambda h: self._key(h, qx, qy))
        best = self._key(cur, qx, qy)
        while True:
            nxt = None
            for w in self._neighbor_handles(cur):
                kw = self._key(w, qx, qy)
                if kw < best:
                    best, nxt = kw, w
            if nxt is None:
                break
            cur = nxt
        # equidistant sites sit on one empty circle and are chained by
        # Delaunay edges; pick the smallest id among them
        d0 = best[0]
        seen = {cur}
        stack = [cur]
        while stack:
            v = stack.pop()
            for w in self._neighbor_handles(v):
                if w not in seen:
                    kw = self._key(w, qx, qy)
                    if kw[0] == d0:
                        seen.add(w)
                        stack.append(w)
                        if kw < best:
                            best, cur = kw, w
        self._last = cur
        return cur

    def nearest_neighbor(self, q: Sequence[float], hint=None):
        h = self._handle.get(hint) if hint is not None else None
        return self._vid[self._nearest_handle(float(q[0]), float(q[1]), h)]

    def k_nearest(self, q: Sequence[float], k: int) -> list:
        return [oid for _, oid in self.k_nearest_with_d2(q, k)]

    def k_nearest_with_d2(self, q: Sequence[float], k: int) -> list[tuple[float, object]]:
        """``(d2, id)`` pairs of the ``min(k, n)`` nearest objects."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self._handle:
            raise EmptyIndex("k-nearest on empty index")
        qx, qy = float(q[0]), float(q[1])
        if not self._tri:
            keys = [self._key(h, qx, qy) for h in self._handle.values()]
            return heapq.nsmallest(k, keys)
        start = self._nearest_handle(qx, qy)
        X, Y, vid = self._x, self._y, self._vid
        dx, dy = X[start] - qx, Y[start] - qy
        heap = [(dx * dx + dy * dy, vid[start], start)]
        seen = {start}
        found: list[tuple[float, object]] = []
        kth = None
        while heap:
            d, oid, v = heap[0]
            if kth is not None and d > kth:
                break
            heapq.heappop(heap)
            found.append((d, oid))
            if kth is None and len(found) == k:
                kth = d
            for w in self._neighbor_handles(v):
                if w not in seen:
                    seen.add(w)
                    dx, dy = X[w] - qx, Y[w] - qy
                    heapq.heappush(heap, (dx * dx + dy * dy, vid[w], w))
        found.sort()
        return found[:k]

    def within(self, center: Sequence[float], r2: float) -> list:
        """Ids at squared distance ``<= r2`` from ``center`` (graph flood)."""
        if not self._handle:
            return []
        qx, qy = float(center[0]), float(center[1])
        if not self._tri:
            return [self._vid[h] for h in self._handle.values() if self._key(h, qx, qy)[0] <= r2]
        start = self._nearest_handle(qx, qy)
        X, Y, vid = self._x, self._y, self._vid
        out = []
        seen = {start}
        stack = [start]
        while stack:
            v = stack.pop()
            dx, dy = X[v] - qx, Y[v] - qy
            if dx * dx + dy * dy > r2:
                continue
            out.append(vid[v])
            for w in self._neighbor_handles(v):
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return out

    def range_query(self, window: Mbr) -> set:
        """Ids inside the closed ``window``: walk to its centre, then flood
        the Delaunay graph inside the circumscribed disc."""
        xl, xh, yl, yh = window
        if not self._handle:
            return set()
        cx, cy = (xl + xh) / 2.0, (yl + yh) / 2.0
        r2 = max(dist2((cx, cy), c) for c in ((xl, yl), (xh, yl), (xh, yh), (xl, yh)))
        r2 = r2 * (1.0 + 1e-12) + 1e-300
        X, Y = self._x, self._y
        out = set()
        for oid in self.within((cx, cy), r2):
            h = self._handle[oid]
            if xl <= X[h] <= xh and yl <= Y[h] <= yh:
                out.add(oid)
        return out

    def voronoi_cell(self, oid, clip: Mbr) -> list[Point]:
        """Voronoi cell of ``oid`` clipped to ``clip``, CCW."""
        h = self.handle(oid)
        site = (self._x[h], self._y[h])
        poly = clip.corners()
        if self._tri:
            others = self._neighbor_handles(h)
        else:
            others = [w for w in self._handle.values() if w != h]
        for w in others:
            poly = bisector_clip(poly, site, (self._x[w], self._y[w]))
            if not poly:
                break
        return poly

    # -- audits ----------------------------------------------------------

    def check_adjacency(self) -> None:
        fv, fn = self._fv, self._fn
        for f, alive in enumerate(self._alive):
            if not alive:
                continue
            k = 3 * f
            for i in range(3):
                g = fn[k + i]
                if g < 0 or not self._alive[g]:
                    raise AssertionError(f"face {f} has dead neighbour {g}")
                a, b = fv[k + _NEXT[i]], fv[k + _PREV[i]]
                kg = 3 * g
                gv = fv[kg:kg + 3]
                if a not in gv or b not in gv:
                    raise AssertionError(f"faces {f},{g} do not share an edge")
                j = next(j for j in range(3) if gv[j] not in (a, b))
                if fn[kg + j] != f:
                    raise AssertionError(f"asymmetric adjacency {f}->{g}")
                if (gv[_NEXT[j]], gv[_PREV[j]]) != (b, a):
                    raise AssertionError(f"inconsistent orientation {f},{g}")
            a, b, c = fv[k], fv[k + 1], fv[k + 2]
            if a and b and c:
                X, Y = self._x, self._y
                if orient_sign(X[a], Y[a], X[b], Y[b], X[c], Y[c]) <= 0:
                    raise AssertionError(f"face {f} not counter-clockwise")
        for oid, h in self._handle.items():
            if self._tri and h not in fv[3 * self._vface[h]:3 * self._vface[h] + 3]:
                raise AssertionError(f"stale vertex face for {oid}")

    def check_euler(self) -> None:
        n = len(self._handle)
        if not self._tri:
            return
        h = self.hull_size()
        faces = self._nfinite
        edges = len(self.edges())
        if faces != 2 * n - 2 - h or edges != 3 * n - 3 - h:
            raise AssertionError(f"Euler mismatch n={n} h={h} faces={faces} edges={edges}")

    def check_delaunay_local(self) -> None:
        """Every finite edge is locally Delaunay (equivalent to the global property)."""
        fv, fn, X, Y = self._fv, self._fn, self._x, self._y
        for f, alive in enumerate(self._alive):
            if not alive or self._is_infinite(f):
                continue
            k = 3 * f
            a, b, c = fv[k], fv[k + 1], fv[k + 2]
            for i in range(3):
                g = fn[k + i]
                kg = 3 * g
                w = next(fv[kg + j] for j in range(3) if fn[kg + j] == f)
                if w == INF:
                    continue
                if in_circle_sign(X[a], Y[a], X[b], Y[b], X[c], Y[c], X[w], Y[w]) > 0:
                    raise AssertionError(f"edge opposite {self._vid[fv[k + i]]} not Delaunay")


def empty_circle_violations(tri: Triangulation) -> list[tuple]:
    """Brute-force audit: ``(face, id)`` pairs with the id strictly inside."""
    pts = {oid: tri.position(oid) for oid in tri.ids()}
    bad = []
    for face in tri.finite_faces():
        a, b, c = (pts[i] for i in face)
        for oid, p in pts.items():
            if oid in face:
                continue
            if in_circle_sign(a.x, a.y, b.x, b.y, c.x, c.y, p.x, p.y) > 0:
                bad.append((face, oid))
    return bad


def build(points: dict, world: Optional[Mbr] = None) -> Triangulation:
    """From-scratch triangulation, inserting in ascending id order."""
    t = Triangulation(world)
    for oid in sorted(points):
        t.insert(oid, points[oid])
    return t
