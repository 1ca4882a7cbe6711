"""Guttman R-tree over point objects.

Leaves hold ``(oid, x, y)`` entries; internal nodes hold child nodes.  Every
node carries its bounding rectangle as a mutable ``[xl, xh, yl, yh]`` list.
Insertion descends by least area enlargement and splits overflowing nodes
with the quadratic heuristic; deletion condenses underfull nodes and
re-inserts their entries at the level they came from.

Each node also keeps its children's coordinates in one flat ``array('d')``
(``box``) so that range scans read contiguous memory instead of chasing a
tuple and two float objects per entry; on large trees that chasing, not the
number of nodes visited, dominates the cost.  Boxes of the nodes touched by a
mutation are rebuilt when the public call returns.

Points give zero-area rectangles, so every area comparison is tie-broken on
the rectangle margin (half perimeter); otherwise collinear data would make
all choices look equal.
"""

from __future__ import annotations

import heapq
import math
from array import array
from typing import Callable, Iterator, Optional, Sequence

from .errors import DuplicateId, UnknownId
from .geom import Mbr


def _area(r) -> float:
    return (r[1] - r[0]) * (r[3] - r[2])


def _margin(r) -> float:
    return (r[1] - r[0]) + (r[3] - r[2])


def _union(r, s) -> list[float]:
    return [min(r[0], s[0]), max(r[1], s[1]), min(r[2], s[2]), max(r[3], s[3])]


def _rect_of(entry, leaf: bool):
    if leaf:
        _, x, y = entry
        return (x, x, y, y)
    return entry.mbr


class Node:
    __slots__ = ("level", "entries", "mbr", "parent", "box")

    def __init__(self, level: int, parent: Optional["Node"] = None):
        self.level = level
        self.entries: list = []
        self.mbr: Optional[list[float]] = None
        self.parent = parent
        self.box = array("d")

    @property
    def leaf(self) -> bool:
        return self.level == 0

    def recompute(self) -> None:
        if not self.entries:
            self.mbr = None
            return
        if self.level == 0:
            xs = [e[1] for e in self.entries]
            ys = [e[2] for e in self.entries]
            self.mbr = [min(xs), max(xs), min(ys), max(ys)]
        else:
            rs = [c.mbr for c in self.entries]
            self.mbr = [
                min(r[0] for r in rs),
                max(r[1] for r in rs),
                min(r[2] for r in rs),
                max(r[3] for r in rs),
            ]

    def flat(self) -> array:
        if self.level == 0:
            return array("d", [v for e in self.entries for v in (e[1], e[2])])
        return array("d", [v for c in self.entries for v in c.mbr])


class RTree:
    def __init__(self, max_entries: int = 16, min_entries: Optional[int] = None):
        if min_entries is None:
            min_entries = max(1, min(max_entries // 2, max(2, int(0.4 * max_entries))))
        if max_entries < 2 or not 1 <= min_entries <= max_entries // 2:
            raise ValueError(f"invalid capacity M={max_entries} m={min_entries}")
        self.M = max_entries
        self.m = min_entries
        self.root = Node(0)
        self._leaf_of: dict = {}
        self.splits = 0
        self.nodes_visited = 0
        self._dirty: set = set()

    def __len__(self) -> int:
        return len(self._leaf_of)

    def __contains__(self, oid) -> bool:
        return oid in self._leaf_of

    @property
    def height(self) -> int:
        return self.root.level + 1

    def ids(self) -> Iterator:
        return iter(self._leaf_of)

    def position(self, oid) -> tuple[float, float]:
        leaf = self._leaf_of.get(oid)
        if leaf is None:
            raise UnknownId(oid)
        for e in leaf.entries:
            if e[0] == oid:
                return (e[1], e[2])
        raise AssertionError("leaf map out of sync")

    # -- insertion -------------------------------------------------------

    def insert(self, oid, p: Sequence[float]) -> None:
        if oid in self._leaf_of:
            raise DuplicateId(oid)
        x, y = float(p[0]), float(p[1])
        self._insert_entry((oid, x, y), 0)
        self._flush()

    def _flush(self) -> None:
        for node in self._dirty:
            node.box = node.flat()
        self._dirty.clear()

    def _choose(self, rect, level: int) -> Node:
        node = self.root
        while node.level > level:
            best = None
            best_key = None
            for child in node.entries:
                r = child.mbr
                u = _union(r, rect)
                a = _area(r)
                key = (_area(u) - a, _margin(u) - _margin(r), a)
                if best_key is None or key < best_key:
                    best, best_key = child, key
            node = best
        return node

    def _insert_entry(self, entry, level: int) -> None:
        leaf = level == 0
        rect = _rect_of(entry, leaf)
        node = self._choose(rect, level)
        node.entries.append(entry)
        self._dirty.add(node)
        if leaf:
            self._leaf_of[entry[0]] = node
        else:
            entry.parent = node
        split = None
        if len(node.entries) > self.M:
            split = self._split(node)
        else:
            node.mbr = list(rect) if node.mbr is None else _union(node.mbr, rect)
        self._adjust(node, split)

    def _adjust(self, node: Node, split: Optional[Node]) -> None:
        while node is not self.root:
            parent = node.parent
            self._dirty.add(parent)
            if split is not None:
                split.parent = parent
                parent.entries.append(split)
                if len(parent.entries) > self.M:
                    parent_split = self._split(parent)
                else:
                    parent_split = None
                    parent.recompute()
            else:
                parent_split = None
                old = parent.mbr
                parent.mbr = _union(old, node.mbr) if old is not None else list(node.mbr)
            node, split = parent, parent_split
        if split is not None:
            root = Node(node.level + 1)
            root.entries = [node, split]
            node.parent = root
            split.parent = root
            root.recompute()
            self._dirty.add(root)
            self.root = root

    def _split(self, node: Node) -> Node:
        """Quadratic split; ``node`` keeps one group, the returned sibling the other."""
        self.splits += 1
        leaf = node.leaf
        entries = node.entries
        rects = [_rect_of(e, leaf) for e in entries]
        n = len(entries)
        best = None
        seeds = (0, 1)
        for i in range(n):
            ri = rects[i]
            ai = _area(ri)
            for j in range(i + 1, n):
                rj = rects[j]
                u = _union(ri, rj)
                key = (_area(u) - ai - _area(rj), _margin(u))
                if best is None or key > best:
                    best, seeds = key, (i, j)
        g1, g2 = [seeds[0]], [seeds[1]]
        r1, r2 = list(rects[seeds[0]]), list(rects[seeds[1]])
        rest = [i for i in range(n) if i not in seeds]
        m = self.m
        while rest:
            if len(g1) + len(rest) == m:
                g1.extend(rest)
                for i in rest:
                    r1 = _union(r1, rects[i])
                break
            if len(g2) + len(rest) == m:
                g2.extend(rest)
                for i in rest:
                    r2 = _union(r2, rects[i])
                break
            pick = None
            pick_key = None
            for i in rest:
                u1 = _union(r1, rects[i])
                u2 = _union(r2, rects[i])
                d1 = (_area(u1) - _area(r1), _margin(u1) - _margin(r1))
                d2 = (_area(u2) - _area(r2), _margin(u2) - _margin(r2))
                diff = (abs(d1[0] - d2[0]), abs(d1[1] - d2[1]))
                if pick_key is None or diff > pick_key:
                    pick, pick_key, pd1, pd2 = i, diff, d1, d2
            rest.remove(pick)
            c1 = (pd1, _area(r1), len(g1))
            c2 = (pd2, _area(r2), len(g2))
            if c1 <= c2:
                g1.append(pick)
                r1 = _union(r1, rects[pick])
            else:
                g2.append(pick)
                r2 = _union(r2, rects[pick])
        sibling = Node(node.level, node.parent)
        node.entries = [entries[i] for i in g1]
        sibling.entries = [entries[i] for i in g2]
        node.mbr = r1
        sibling.mbr = r2
        self._dirty.add(node)
        self._dirty.add(sibling)
        if leaf:
            for e in sibling.entries:
                self._leaf_of[e[0]] = sibling
        else:
            for c in sibling.entries:
                c.parent = sibling
        return sibling

    # -- removal ---------------------------------------------------------

    def remove(self, oid) -> None:
        leaf = self._leaf_of.pop(oid, None)
        if leaf is None:
            raise UnknownId(oid)
        leaf.entries = [e for e in leaf.entries if e[0] != oid]
        self._condense(leaf)
        self._flush()

    def _condense(self, node: Node) -> None:
        orphans: list[tuple[int, object]] = []
        while node is not self.root:
            parent = node.parent
            self._dirty.add(node)
            self._dirty.add(parent)
            if len(node.entries) < self.m:
                parent.entries.remove(node)
                orphans.extend((node.level, e) for e in node.entries)
                if node.leaf:
                    for e in node.entries:
                        del self._leaf_of[e[0]]
            else:
                node.recompute()
            node = parent
        self.root.recompute()
        self._dirty.add(self.root)
        # reinsert higher subtrees first so that levels still exist
        orphans.sort(key=lambda t: -t[0])
        for level, entry in orphans:
            if level > self.root.level:
                # the tree shrank below this subtree's level: re-add its points
                for leaf_entry in self._points_under(entry):
                    self._insert_entry(leaf_entry, 0)
            else:
                self._insert_entry(entry, level)
        while not self.root.leaf and len(self.root.entries) == 1:
            child = self.root.entries[0]
            child.parent = None
            self.root = child
        if self.root.leaf and not self.root.entries:
            self.root.mbr = None

    def _points_under(self, entry) -> list:
        if isinstance(entry, tuple):
            return [entry]
        out = []
        stack = [entry]
        while stack:
            n = stack.pop()
            if n.leaf:
                out.extend(n.entries)
            else:
                stack.extend(n.entries)
        return out

    def move(self, oid, p_new: Sequence[float]) -> None:
        if oid not in self._leaf_of:
            raise UnknownId(oid)
        x, y = float(p_new[0]), float(p_new[1])
        if self.position(oid) == (x, y):
            return
        self.remove(oid)
        self._insert_entry((oid, x, y), 0)
        self._flush()

    # -- queries ---------------------------------------------------------

    def range_query(self, window: Sequence[float]) -> set:
        xl, xh, yl, yh = window[0], window[1], window[2], window[3]
        out = set()
        if self.root.mbr is None:
            return out
        stack = [self.root]
        visited = 0
        while stack:
            node = stack.pop()
            visited += 1
            f = node.box
            if node.level == 0:
                for i in range(0, len(f), 2):
                    if xl <= f[i] <= xh and yl <= f[i + 1] <= yh:
                        out.add(node.entries[i >> 1][0])
            else:
                children = node.entries
                for i in range(0, len(f), 4):
                    if f[i] <= xh and xl <= f[i + 1] and f[i + 2] <= yh and yl <= f[i + 3]:
                        stack.append(children[i >> 2])
        self.nodes_visited += visited
        return out

    def k_nearest(self, q: Sequence[float], k: int, accept: Optional[Callable] = None) -> list:
        return [oid for _, oid in self.k_nearest_with_d2(q, k, accept)]

    def k_nearest_with_d2(
        self, q: Sequence[float], k: int, accept: Optional[Callable] = None
    ) -> list[tuple[float, object]]:
        """Best-first branch and bound.

        Heap keys are ``(d2, kind, tiebreak)`` with nodes (kind 0) ahead of
        points (kind 1) at equal distance, so a node that could still hold an
        equidistant smaller id is opened before that distance is emitted.
        ``accept`` filters object ids during the traversal.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        qx, qy = float(q[0]), float(q[1])
        out: list[tuple[float, object]] = []
        if self.root.mbr is None:
            return out
        heap = [(0.0, 0, 0, self.root)]
        counter = 1
        while heap and len(out) < k:
            d, kind, tb, item = heapq.heappop(heap)
            if kind == 1:
                out.append((d, tb))
                continue
            self.nodes_visited += 1
            if item.level == 0:
                for oid, x, y in item.entries:
                    if accept is not None and not accept(oid):
                        continue
                    dx, dy = x - qx, y - qy
                    heapq.heappush(heap, (dx * dx + dy * dy, 1, oid, None))
            else:
                for c in item.entries:
                    r = c.mbr
                    dx = r[0] - qx if qx < r[0] else (qx - r[1] if qx > r[1] else 0.0)
                    dy = r[2] - qy if qy < r[2] else (qy - r[3] if qy > r[3] else 0.0)
                    heapq.heappush(heap, (dx * dx + dy * dy, 0, counter, c))
                    counter += 1
        return out

    # -- audit -----------------------------------------------------------

    def audit(self) -> None:
        """Raise ``AssertionError`` unless every structural invariant holds."""
        root = self.root
        if root.parent is not None:
            raise AssertionError("root has a parent")
        if not root.leaf and len(root.entries) < 2:
            raise AssertionError("internal root with fewer than two children")
        seen = {}
        leaf_depths = set()
        stack = [(root, 0)]
        while stack:
            node, depth = stack.pop()
            if node is not root and not self.m <= len(node.entries) <= self.M:
                raise AssertionError(f"occupancy {len(node.entries)} outside [{self.m}, {self.M}]")
            if len(node.entries) > self.M:
                raise AssertionError("root overflow")
            if node.leaf:
                leaf_depths.add(depth)
                for e in node.entries:
                    if e[0] in seen:
                        raise AssertionError(f"duplicate entry {e[0]}")
                    seen[e[0]] = node
                    if self._leaf_of.get(e[0]) is not node:
                        raise AssertionError(f"leaf map stale for {e[0]}")
                rects = [(e[1], e[1], e[2], e[2]) for e in node.entries]
            else:
                for c in node.entries:
                    if c.parent is not node:
                        raise AssertionError("broken parent pointer")
                    if c.level != node.level - 1:
                        raise AssertionError("level mismatch")
                    stack.append((c, depth + 1))
                rects = [c.mbr for c in node.entries]
            if node.box != node.flat():
                raise AssertionError("stale coordinate box")
            if rects:
                tight = [
                    min(r[0] for r in rects),
                    max(r[1] for r in rects),
                    min(r[2] for r in rects),
                    max(r[3] for r in rects),
                ]
                if node.mbr != tight:
                    raise AssertionError(f"non-minimal MBR {node.mbr} != {tight}")
            elif node is not root:
                raise AssertionError("empty non-root node")
        if len(leaf_depths) > 1:
            raise AssertionError(f"leaves at depths {sorted(leaf_depths)}")
        if len(seen) != len(self._leaf_of):
            raise AssertionError("leaf map has extra ids")
        n = len(seen)
        if n > 1 and self.m >= 2:
            # log base m is undefined for m = 1
            bound = math.ceil(math.log(n) / math.log(self.m)) + 1
            if self.height > bound:
                raise AssertionError(f"height {self.height} > {bound}")
