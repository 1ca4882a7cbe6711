"""Border knowledge shared by the zone servers.

Servers reason about their borders through the Delaunay graph of *all*
objects and the owner of each object.  A deployed system would keep that
by exchanging border objects with neighbouring servers; the simulation
keeps one global triangulation plus the logical owner map and lets every
server read it.  Servers still hold their own objects in their own
databases and answer queries from those alone.

Ownership here is *logical*: an object handed to another server belongs to
the receiver from the moment it is sent, even while the transfer message
is in flight.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

from ..delaunay import Triangulation
from ..geom import Mbr


class Directory:
    def __init__(self, world: Mbr):
        self.world = world
        self.fabric = Triangulation(world)
        self.owner: dict[int, str] = {}
        self.members: dict[str, set] = {}
        self.dirty: set[str] = set()

    def __len__(self) -> int:
        return len(self.owner)

    def register(self, server: str) -> None:
        self.members.setdefault(server, set())

    def _touch(self, oids: Iterable[int]) -> None:
        own = self.owner
        for o in oids:
            s = own.get(o)
            if s is not None:
                self.dirty.add(s)

    # -- mutations -------------------------------------------------------

    def add(self, oid: int, p: Sequence[float], server: str) -> None:
        self.fabric.insert(oid, p)
        self.owner[oid] = server
        self.members[server].add(oid)
        self.dirty.add(server)
        self._touch(self.fabric.neighbors(oid))

    def move(self, oid: int, p: Sequence[float]) -> None:
        self._touch(self.fabric.neighbors(oid))
        self.fabric.move(oid, p)
        self._touch(self.fabric.neighbors(oid))
        self.dirty.add(self.owner[oid])

    def remove(self, oid: int) -> None:
        self._touch(self.fabric.neighbors(oid))
        self.fabric.remove(oid)
        server = self.owner.pop(oid)
        self.members[server].discard(oid)
        self.dirty.add(server)

    def assign(self, oids: Iterable[int], server: str) -> None:
        for oid in oids:
            old = self.owner[oid]
            if old == server:
                continue
            self.members[old].discard(oid)
            self.members[server].add(oid)
            self.owner[oid] = server
            self.dirty.add(old)
            self.dirty.add(server)
            self._touch(self.fabric.neighbors(oid))

    # -- reads -----------------------------------------------------------

    def neighbors(self, oid: int) -> set:
        return self.fabric.neighbors(oid)

    def position(self, oid: int):
        return self.fabric.position(oid)

    def nearest(self, p: Sequence[float], exclude: Optional[int] = None) -> Optional[int]:
        n = len(self.fabric)
        if n == 0 or (n == 1 and exclude in self.fabric):
            return None
        for _, oid in self.fabric.k_nearest_with_d2(p, 2):
            if oid != exclude:
                return oid
        return None

    def cell_meets(self, oid: int, window: Sequence[float]) -> bool:
        """Does the Voronoi cell of ``oid`` touch the closed ``window``?

        The window is widened by a hair so that cells meeting it only along
        an edge or a corner are never missed; an extra hit costs one
        message, a miss would cost exactness.
        """
        xl, xh, yl, yh = window
        e = 1e-9 * max(1.0, xh - xl, yh - yl)
        clip = Mbr(xl - e, xh + e, yl - e, yh + e)
        return bool(self.fabric.voronoi_cell(oid, clip))

    def load(self, server: str) -> int:
        return len(self.members[server])

    def components(self, server: str) -> list[list[int]]:
        """Connected pieces of a zone in the global Delaunay graph, each sorted."""
        mem = self.members[server]
        seen: set = set()
        out = []
        for start in sorted(mem):
            if start in seen:
                continue
            seen.add(start)
            comp = [start]
            stack = [start]
            while stack:
                v = stack.pop()
                for w in self.fabric.neighbors(v):
                    if w in mem and w not in seen:
                        seen.add(w)
                        comp.append(w)
                        stack.append(w)
            comp.sort()
            out.append(comp)
        return out

    def links(self, server: str) -> set[str]:
        """Servers owning an object Delaunay-adjacent to one of ours."""
        own = self.owner
        out = set()
        for v in self.members[server]:
            for w in self.fabric.neighbors(v):
                s = own[w]
                if s != server:
                    out.add(s)
        return out
