"""Zone server: indexes the objects of one contiguous zone.

A zone is the union of the Voronoi cells of the server's objects; it is
never built as a polygon.  All border reasoning goes through Delaunay
edges between objects of different owners, read from the shared
``Directory``.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from fractions import Fraction
from typing import Optional

from ..dsd import Dsd
from ..geom import dist2
from .directory import Directory
from .simnet import Message, SimNet

INF = math.inf


class ZoneServer:
    def __init__(self, name: str, index: int, parent: str, net: SimNet, directory: Directory):
        self.name = name
        self.index = index
        self.parent = parent
        self.net = net
        self.dir = directory
        self.dsd = Dsd("delaunay", directory.world)
        self.sample: Optional[int] = None
        self.links: set[str] = set()
        self.known: dict[str, tuple[int, int]] = {}
        self._pending: dict[int, list[Message]] = {}
        self._reported_sample = ("unset",)
        self._reported_load: Optional[tuple] = None
        self._range_seen: dict = {}
        self._cell_cache: dict = {}
        self.transfers_out = 0

    def __repr__(self) -> str:
        return f"ZoneServer({self.name}, load={len(self.dsd)})"

    @property
    def load(self) -> int:
        """Logical load: objects owned, including ones still in transit to us."""
        return self.dir.load(self.name)

    def send(self, type_: str, dst: str, **payload) -> None:
        self.net.send(type_, self.name, dst, **payload)

    # -- dispatch --------------------------------------------------------

    def handle(self, m: Message) -> None:
        getattr(self, "on_" + m.type)(m)

    def _greedy_owner(self, p) -> Optional[str]:
        """Follow Delaunay edges from our nearest object towards ``p``.

        Returns ``None`` when our zone contains ``p`` (the walk ends at an
        object of ours), otherwise the first foreign owner met.
        """
        d = self.dir
        if len(self.dsd):
            cur = self.dsd.knn_d2(p, 1)[0][1]
        else:
            cur = d.nearest(p)
            if cur is None:
                return None
            if d.owner[cur] != self.name:
                return d.owner[cur]
        best = (dist2(d.position(cur), p), cur)
        while True:
            nxt = None
            for w in d.neighbors(cur):
                kw = (dist2(d.position(w), p), w)
                if kw < best:
                    best, nxt = kw, w
            if nxt is None:
                return None if d.owner[cur] == self.name else d.owner[cur]
            cur = nxt
            if d.owner[cur] != self.name:
                return d.owner[cur]

    # -- object traffic --------------------------------------------------

    def on_Join(self, m: Message) -> None:
        oid, x, y, attrs = m.payload["obj"]
        target = self._greedy_owner((x, y))
        if target is not None:
            self.send("Join", target, obj=m.payload["obj"])
            return
        self.dsd.put(oid, (x, y), attrs)
        self.dir.add(oid, (x, y), self.name)

    def _route_object_msg(self, m: Message) -> bool:
        """True if we hold the object; otherwise buffer or pass the message on."""
        oid = m.payload["id"]
        if oid in self.dsd:
            return True
        owner = self.dir.owner.get(oid)
        if owner == self.name:
            self._pending.setdefault(oid, []).append(m)
        elif owner is not None:
            self.send(m.type, owner, **m.payload)
        return False

    def on_PositionUpdate(self, m: Message) -> None:
        if not self._route_object_msg(m):
            return
        oid = m.payload["id"]
        p = (m.payload["x"], m.payload["y"])
        obj = self.dsd.get(oid)
        if obj.position == p:
            return
        holder = self.dir.fabric.id_at(p)
        if holder is not None and holder != oid:
            return  # another object already sits there; the update is dropped
        self.dsd.put(oid, p, obj.attrs)
        self.dir.move(oid, p)
        nn = self.dir.nearest(p, exclude=oid)
        if nn is not None and self.dir.owner[nn] != self.name:
            self.transfer([oid], self.dir.owner[nn])

    def on_Leave(self, m: Message) -> None:
        if not self._route_object_msg(m):
            return
        oid = m.payload["id"]
        self.dsd.delete(oid)
        self.dir.remove(oid)

    def transfer(self, oids, dest: str) -> int:
        """Hand ``oids`` to ``dest``.  Ownership moves at once; objects we
        hold ride in one message, buffered updates follow on the same
        channel, so FIFO delivers them after the objects."""
        oids = sorted(oids)
        if not oids:
            return 0
        objs = []
        for oid in oids:
            if oid in self.dsd:
                o = self.dsd.get(oid)
                objs.append((oid, o.position[0], o.position[1], tuple(sorted(o.attrs))))
                self.dsd.delete(oid)
        self.dir.assign(oids, dest)
        if objs:
            self.send("ObjectTransfer", dest, objs=objs)
        for oid in oids:
            for pm in self._pending.pop(oid, []):
                self.send(pm.type, dest, **pm.payload)
        self.transfers_out += len(oids)
        return len(oids)

    def on_ObjectTransfer(self, m: Message) -> None:
        onward: dict[str, list] = {}
        arrived = []
        for rec in m.payload["objs"]:
            oid, x, y, attrs = rec
            owner = self.dir.owner.get(oid)
            if owner == self.name:
                self.dsd.put(oid, (x, y), attrs)
                arrived.append(oid)
            elif owner is not None:
                onward.setdefault(owner, []).append(rec)
        for dest in sorted(onward):
            self.send("ObjectTransfer", dest, objs=onward[dest])
        for oid in arrived:
            for pm in self._pending.pop(oid, []):
                self.handle(pm)

    # -- queries ---------------------------------------------------------

    def _split(self, weight: Fraction, parts: int) -> Fraction:
        return weight / (parts + 1)

    def on_QueryRequest(self, m: Message) -> None:
        self._query(m)

    def on_BorderForward(self, m: Message) -> None:
        self._query(m)

    def _query(self, m: Message) -> None:
        if m.payload["kind"] == "knn":
            self._knn(m)
        else:
            self._range(m)

    def _knn(self, m: Message) -> None:
        pl = m.payload
        q = (pl["x"], pl["y"])
        k = pl["k"]
        d = self.dir
        local = self.dsd.knn_d2(q, k) if len(self.dsd) else []
        merged = heapq.nsmallest(k, set(map(tuple, pl["cands"])) | set(local))
        r = merged[k - 1][0] if len(merged) >= k else INF
        visited = set(pl["visited"]) | {self.name}
        targets: set[str] = set()
        if local:
            d_near, near = local[0]
            if r == INF:
                seeds = list(self.dsd.objects)
            else:
                seeds = self.dsd.index.within(q, r)
            seeds = set(seeds) | {near}
            for s in sorted(seeds):
                for z in d.neighbors(s):
                    owner = d.owner[z]
                    if owner == self.name or owner in visited:
                        continue
                    dz = dist2(d.position(z), q)
                    if dz <= r or (s == near and dz < d_near):
                        targets.add(owner)
        else:
            # an empty zone has no border of its own; hand over to the
            # zone holding the nearest object
            nn = d.nearest(q)
            if nn is not None and d.owner[nn] not in visited:
                targets.add(d.owner[nn])
        share = self._split(pl["weight"], len(targets))
        visited |= targets
        fwd = dict(pl, cands=merged, visited=sorted(visited), weight=share)
        for t in sorted(targets):
            self.send("BorderForward", t, **fwd)
        self.send("QueryResponse", pl["coord"], qid=pl["qid"], kind="knn", items=local,
                  weight=share, hops=pl["hops"], server=self.name)

    def _meets(self, qid, oid, window) -> bool:
        key = (qid, oid)
        hit = self._cell_cache.get(key)
        if hit is None:
            hit = self._cell_cache[key] = self.dir.cell_meets(oid, window)
        return hit

    def _range(self, m: Message) -> None:
        """Flood the objects whose Voronoi cells meet the window.  Those
        cells cover the (connected) window, so their Delaunay subgraph is
        connected and the flood reaches every zone that can hold a hit."""
        pl = m.payload
        qid = pl["qid"]
        window = tuple(pl["window"])
        d = self.dir
        first = qid not in self._range_seen
        flooded = self._range_seen.setdefault(qid, set())
        hits = sorted(self.dsd.range(window)) if first else []
        seeds = [e for e in pl["entries"] if d.owner.get(e) == self.name and e not in flooded]
        seeds += [h for h in hits if h not in flooded]
        targets: dict[str, set] = {}
        if not seeds and pl["seek"]:
            cx = (window[0] + window[1]) / 2.0
            cy = (window[2] + window[3]) / 2.0
            owner = self._greedy_owner((cx, cy))
            if owner is None:
                if len(self.dsd):
                    seeds = [self.dsd.knn_d2((cx, cy), 1)[0][1]]
            else:
                targets[owner] = set()
        stack = []
        for s in seeds:
            if s not in flooded:
                flooded.add(s)
                stack.append(s)
        while stack:
            v = stack.pop()
            for z in sorted(d.neighbors(v)):
                owner = d.owner[z]
                if owner == self.name:
                    if z not in flooded and self._meets(qid, z, window):
                        flooded.add(z)
                        stack.append(z)
                elif self._meets(qid, z, window):
                    targets.setdefault(owner, set()).add(z)
        share = self._split(pl["weight"], len(targets))
        for t in sorted(targets):
            ents = sorted(targets[t])
            self.send("BorderForward", t, **dict(pl, entries=ents, seek=not ents, weight=share))
        self.send("QueryResponse", pl["coord"], qid=qid, kind="range", items=hits,
                  weight=share, hops=pl["hops"], server=self.name)

    def forget_query(self, qid) -> None:
        self._range_seen.pop(qid, None)
        for key in [k for k in self._cell_cache if k[0] == qid]:
            del self._cell_cache[key]

    # -- load balancing --------------------------------------------------

    def on_LoadReport(self, m: Message) -> None:
        self.known[m.payload["server"]] = (m.payload["load"], m.payload["degree"])

    def on_AdoptRequest(self, m: Message) -> None:
        empty = m.payload["empty"]
        if self.dir.load(empty) > 0:
            return  # somebody else filled it already
        load = self.load
        chunk = self._adopt_chunk(load // 2) if load >= 2 else []
        if not chunk:
            self.send("AdoptDecline", self.parent, server=self.name, empty=empty, load=load)
            return
        self.transfer(chunk, empty)
        self.known[empty] = (len(chunk), 0)

    def _keep_component(self, comps: list[list[int]]) -> list[int]:
        return max(comps, key=lambda c: (len(c), self.sample in c, -c[0]))

    def _components_without(self, removed: set) -> list[list[int]]:
        mem = self.dir.members[self.name]
        rest = mem - removed
        seen: set = set()
        out = []
        for start in sorted(rest):
            if start in seen:
                continue
            seen.add(start)
            comp = [start]
            stack = [start]
            while stack:
                v = stack.pop()
                for w in self.dir.neighbors(v):
                    if w in rest and w not in seen:
                        seen.add(w)
                        comp.append(w)
                        stack.append(w)
            comp.sort()
            out.append(comp)
        return out

    def _bfs_order(self, sources: list[int]) -> list[int]:
        mem = self.dir.members[self.name]
        order = list(sources)
        seen = set(sources)
        dq = deque(sources)
        while dq:
            v = dq.popleft()
            for w in sorted(self.dir.neighbors(v)):
                if w in mem and w not in seen:
                    seen.add(w)
                    order.append(w)
                    dq.append(w)
        return order

    def _chunk_from(self, order: list[int], cap: int) -> list[int]:
        """Largest BFS prefix (halving from ``cap``) that, together with the
        pieces it would cut off, stays within ``cap``; the donor keeps one
        connected remainder."""
        n = self.load
        size = min(cap, n - 1)
        while size >= 1:
            prefix = set(order[:size])
            comps = self._components_without(prefix)
            if comps:
                keep = self._keep_component(comps)
                chunk = prefix.union(*[c for c in comps if c is not keep])
                if len(chunk) <= cap:
                    return sorted(chunk)
            size //= 2
        return []

    def _border_chunk(self, other: str, cap: int) -> list[int]:
        own = self.dir.owner
        mem = self.dir.members[self.name]
        sources = sorted(v for v in mem if any(own[w] == other for w in self.dir.neighbors(v)))
        # a chunk grown from one border object stays attached to ``other``;
        # try a few starts since some border objects are cut vertices
        for start in sources[:8]:
            chunk = self._chunk_from(self._bfs_order([start]), cap)
            if chunk:
                return chunk
        return []

    def _adopt_chunk(self, cap: int) -> list[int]:
        mem = self.dir.members[self.name]
        if len(mem) < 2 or cap < 1:
            return []
        if self.sample is not None and self.sample in mem:
            sx, sy = self.dir.position(self.sample)
        else:
            sx, sy = self._centroid(mem)
        start = max(mem, key=lambda v: (dist2(self.dir.position(v), (sx, sy)), -v))
        return self._chunk_from(self._bfs_order([start]), cap)

    def repair(self, loads) -> int:
        """Give away every piece of the zone except the main one, each to
        the lightest adjacent zone.  Returns the number of pieces moved."""
        comps = self.dir.components(self.name)
        if len(comps) <= 1:
            return 0
        keep = self._keep_component(comps)
        moved = 0
        own = self.dir.owner
        for comp in comps:
            if comp is keep:
                continue
            adj = set()
            for v in comp:
                for w in self.dir.neighbors(v):
                    if own[w] != self.name:
                        adj.add(own[w])
            target = min(adj, key=lambda s: (loads(s), s))
            self.transfer(comp, target)
            moved += 1
        return moved

    def rebalance(self) -> int:
        """Diffusion step: a neighbour lighter by two or more receives
        ``diff // (1 + max degree)`` border objects, at least one.  The
        degree term keeps a server from overdrawing itself when several
        neighbours are light; the floor of one carries the pairwise gaps
        down to at most one object."""
        moved = 0
        load = self.load
        deg = len(self.links)
        for other in sorted(self.links):
            if other not in self.known:
                continue
            o_load, o_deg = self.known[other]
            diff = load - o_load
            if diff < 2:
                continue
            count = max(1, diff // (1 + max(deg, o_deg)))
            chunk = self._border_chunk(other, count)
            if not chunk:
                continue
            self.transfer(chunk, other)
            self.known[other] = (o_load + len(chunk), o_deg)
            load -= len(chunk)
            moved += len(chunk)
        return moved

    # -- samples and reports ---------------------------------------------

    def _centroid(self, oids) -> tuple[float, float]:
        xs = ys = 0.0
        n = 0
        for oid in oids:
            x, y = self.dir.position(oid)
            xs += x
            ys += y
            n += 1
        return xs / n, ys / n

    def promote_sample(self) -> Optional[int]:
        if not len(self.dsd):
            self.sample = None
            return None
        if self.sample not in self.dsd:
            objs = self.dsd.objects
            c = self._centroid(objs)
            self.sample = min(objs, key=lambda oid: (dist2(objs[oid].position, c), oid))
        return self.sample

    def report(self) -> None:
        self.promote_sample()
        if self.sample is None:
            state = (None,)
        else:
            state = (self.sample, self.dsd.get(self.sample).position)
        if state != self._reported_sample:
            self._reported_sample = state
            if self.sample is None:
                self.send("SampleUpdate", self.parent, child=self.name, sample=None, x=None, y=None)
            else:
                p = state[1]
                self.send("SampleUpdate", self.parent, child=self.name, sample=self.sample,
                          x=p[0], y=p[1])
        load = self.load
        rep = (load, len(self.links), tuple(sorted(self.links)))
        if rep != self._reported_load:
            old_links = set(self._reported_load[2]) if self._reported_load else set()
            changed_load = self._reported_load is None or self._reported_load[:2] != rep[:2]
            self._reported_load = rep
            for other in sorted(self.links):
                if changed_load or other not in old_links:
                    self.send("LoadReport", other, server=self.name, load=load, degree=len(self.links))
            if changed_load:
                self.send("LoadReport", self.parent, server=self.name, load=load,
                          degree=len(self.links))
