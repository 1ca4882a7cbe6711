"""Scalable cluster of zone servers behind a tree of dispatchers.

One tick runs three phases:

1. deliver every message due this tick, in send order;
2. housekeeping on the servers: split zones are repaired, lighter
   neighbours receive border objects, samples and loads are reported;
3. client requests queued since the last tick are sent.

With ``levels = L`` and fanout ``n`` there are ``n**L`` servers and every
query passes through exactly ``L`` dispatchers on its way down.  ``L = 1``
is the flat cluster: a single dispatcher over all servers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from ..errors import ConfigError, DuplicateId, UnknownId
from ..geom import UNIT_SQUARE, Mbr, check_point
from .directory import Directory
from .dispatcher import Dispatcher, QueryResult
from .server import ZoneServer
from .simnet import SimNet


@dataclass(frozen=True)
class ClusterSpec:
    servers: int = 16
    levels: int = 1
    latency: int = 1
    rho: float = 1.25
    seed: int = 0
    world: Mbr = UNIT_SQUARE

    def fanout(self) -> int:
        if self.levels == 1:
            return self.servers
        n = round(self.servers ** (1.0 / self.levels))
        for cand in (n - 1, n, n + 1):
            if cand >= 2 and cand ** self.levels == self.servers:
                return cand
        raise ConfigError(f"{self.servers} servers is not a power n**{self.levels}")

    def validate(self) -> None:
        if self.servers < 1:
            raise ConfigError("need at least one server")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.latency < 1:
            raise ConfigError("latency must be >= 1")
        if self.rho <= 1.0:
            raise ConfigError("rho must exceed 1")
        self.fanout()


def server_name(i: int) -> str:
    return f"z{i}"


class Cluster:
    def __init__(self, spec: ClusterSpec = ClusterSpec(), trace: Optional[Callable[[str], None]] = None):
        spec.validate()
        self.spec = spec
        self.net = SimNet(latency=spec.latency, trace=trace)
        self.dir = Directory(spec.world)
        self.results: dict = {}
        self._outbox: list = []
        self._known_ids: set = set()
        self._build()

    def _build(self) -> None:
        spec = self.spec
        n = spec.fanout()
        L = spec.levels
        self.dispatchers: dict[str, Dispatcher] = {}
        for level in range(L):
            leaf = level == L - 1
            for i in range(n ** level):
                name = f"d{level}.{i}"
                parent = None if level == 0 else f"d{level - 1}.{i // n}"
                if leaf:
                    children = [server_name(i * n + j) for j in range(n)]
                else:
                    children = [f"d{level + 1}.{i * n + j}" for j in range(n)]
                self.dispatchers[name] = Dispatcher(
                    name, parent, children, leaf, self.net, spec.world,
                    on_result=self._record if level == 0 else None,
                )
        self.root = self.dispatchers["d0.0"]
        self.servers: dict[str, ZoneServer] = {}
        for i in range(spec.servers):
            name = server_name(i)
            self.dir.register(name)
            self.servers[name] = ZoneServer(name, i, f"d{L - 1}.{i // n}", self.net, self.dir)
        self.nodes = {**self.dispatchers, **self.servers}
        self._order = [server_name(i) for i in range(spec.servers)]
        for s in self._order:
            self.servers[s].report()

    @property
    def tick(self) -> int:
        return self.net.tick

    def _record(self, res: QueryResult) -> None:
        self.results[res.qid] = res

    # -- client side -----------------------------------------------------

    def join(self, oid: int, p: Sequence[float], attrs=()) -> None:
        p = check_point(p, self.spec.world)
        if oid in self._known_ids:
            raise DuplicateId(oid)
        self._known_ids.add(oid)
        self._outbox.append(("Join", oid, dict(obj=(oid, p.x, p.y, tuple(sorted(attrs))))))

    def move(self, oid: int, p: Sequence[float]) -> None:
        p = check_point(p, self.spec.world)
        if oid not in self._known_ids:
            raise UnknownId(oid)
        self._outbox.append(("PositionUpdate", oid, dict(id=oid, x=p.x, y=p.y)))

    def leave(self, oid: int) -> None:
        if oid not in self._known_ids:
            raise UnknownId(oid)
        self._known_ids.discard(oid)
        self._outbox.append(("Leave", oid, dict(id=oid)))

    def knn(self, qid, q: Sequence[float], k: int) -> None:
        if k < 1:
            raise ConfigError("k must be >= 1")
        q = check_point(q)
        self._outbox.append(("Query", None, dict(qid=qid, kind="knn", x=q.x, y=q.y, k=k)))

    def range(self, qid, window: Sequence[float]) -> None:
        w = Mbr(*window)
        self._outbox.append(("Query", None, dict(qid=qid, kind="range", window=tuple(w))))

    def _flush(self) -> None:
        keep = []
        held = set()
        for item in self._outbox:
            kind, oid, payload = item
            if kind in ("Join", "Query"):
                self.net.send(kind, "client", self.root.name, **payload)
                continue
            owner = self.dir.owner.get(oid)
            if owner is None or oid in held:
                # the join has not landed yet; keep per-object order
                held.add(oid)
                keep.append(item)
                continue
            self.net.send(kind, "client", owner, **payload)
        self._outbox = keep

    # -- simulation ------------------------------------------------------

    def step(self) -> None:
        for m in self.net.due():
            if m.dst == "client":
                continue
            self.nodes[m.dst].handle(m)
        self._housekeeping()
        self._flush()
        self.net.tick += 1

    def _repair_all(self, touched: set) -> None:
        d = self.dir
        while d.dirty:
            batch = sorted(d.dirty, key=self._order.index)
            d.dirty.clear()
            touched.update(batch)
            for s in batch:
                self.servers[s].repair(d.load)

    def _housekeeping(self) -> None:
        touched: set = set()
        self._repair_all(touched)
        for s in touched:
            self.servers[s].links = self.dir.links(s)
        for s in self._order:
            self.servers[s].rebalance()
        after: set = set()
        self._repair_all(after)
        for s in after:
            self.servers[s].links = self.dir.links(s)
        for s in self._order:
            self.servers[s].report()

    def run(self, ticks: int, audit: Optional[Callable[["Cluster"], None]] = None) -> None:
        for _ in range(ticks):
            self.step()
            if audit is not None:
                audit(self)

    def settle(self, max_ticks: int = 10_000, audit=None) -> int:
        """Step until nothing is in flight and no request is waiting."""
        start = self.tick
        while self.tick - start < max_ticks:
            self.step()
            if audit is not None:
                audit(self)
            if self.idle():
                return self.tick - start
        raise RuntimeError(f"cluster did not settle within {max_ticks} ticks")

    # -- inspection ------------------------------------------------------

    def idle(self) -> bool:
        return self.net.idle() and not self._outbox

    def quiescent(self) -> bool:
        return self.net.in_flight("ObjectTransfer") == 0

    def loads(self) -> list[int]:
        return [self.dir.load(s) for s in self._order]

    def balance_ratio(self) -> float:
        loads = self.loads()
        lo = min(loads)
        return math.inf if lo == 0 else max(loads) / lo

    def balanced(self) -> bool:
        """Global balance target: max/min load within ``rho``."""
        return self.balance_ratio() <= self.spec.rho

    def owner_of(self, oid: int) -> str:
        return self.dir.owner[oid]

    def snapshot(self) -> dict:
        """Positions of all objects as held by the servers."""
        out = {}
        for s in self.servers.values():
            for oid, o in s.dsd.objects.items():
                out[oid] = o.position
        return out

    def forget(self, qid) -> None:
        for s in self.servers.values():
            s.forget_query(qid)

    def audit_partition(self) -> None:
        """Every object is held by exactly one server, its logical owner,
        at the position the directory has.  Only meaningful when quiescent."""
        seen: dict = {}
        for name in self._order:
            srv = self.servers[name]
            srv.dsd.audit()
            held = set(srv.dsd.objects)
            if held != self.dir.members[name]:
                raise AssertionError(f"{name} holds {len(held)} objects but owns {self.dir.load(name)}")
            for oid in held:
                if oid in seen:
                    raise AssertionError(f"object {oid} held by {seen[oid]} and {name}")
                seen[oid] = name
                if tuple(srv.dsd.get(oid).position) != tuple(self.dir.position(oid)):
                    raise AssertionError(f"object {oid} position differs from directory")
        if set(seen) != set(self.dir.owner):
            raise AssertionError("held objects differ from the directory")

    def audit_ownership(self) -> None:
        """Logical ownership partitions the object set (holds at every tick)."""
        total = 0
        for name in self._order:
            mem = self.dir.members[name]
            total += len(mem)
            for oid in mem:
                if self.dir.owner[oid] != name:
                    raise AssertionError(f"object {oid} listed under {name}")
        if total != len(self.dir.owner) or len(self.dir.owner) != len(self.dir.fabric):
            raise AssertionError("ownership is not a partition of the objects")

    def audit_contiguity(self) -> None:
        """Every zone induces a connected subgraph of the global Delaunay graph.

        Built from the edge list in one pass with union-find, independent of
        the per-server component search used by the repair step."""
        owner = self.dir.owner
        parent = {oid: oid for oid in owner}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for e in self.dir.fabric.edges():
            a, b = tuple(e)
            if owner[a] == owner[b]:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[ra] = rb
        roots: dict = {}
        for oid, s in owner.items():
            roots.setdefault(s, set()).add(find(oid))
        for s, rs in roots.items():
            if len(rs) > 1:
                raise AssertionError(f"zone {s} is split into {len(rs)} pieces")

    def audit_samples(self) -> None:
        for name in self._order:
            srv = self.servers[name]
            if len(srv.dsd) and srv.sample not in srv.dsd:
                raise AssertionError(f"{name} sample {srv.sample} is not one of its objects")
            if not len(srv.dsd) and srv.sample is not None:
                raise AssertionError(f"empty {name} still has a sample")
