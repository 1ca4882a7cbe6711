"""Spatial query dispatcher.

Each dispatcher keeps a small Delaunay index over one sample object per
child (a zone server, or a lower dispatcher that reports a representative
sample of its own children).  The root also coordinates queries: it splits
a unit weight over the messages it sends, every server returns its share
with its partial answer, and the query is complete once the collected
weight reaches one again.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from ..dsd import Dsd
from ..errors import DuplicatePosition
from ..geom import Mbr, dist2
from .simnet import Message, SimNet


@dataclass
class QueryState:
    qid: object
    kind: str
    k: int = 0
    weight: Fraction = Fraction(0)
    items: set = field(default_factory=set)
    dispatcher_hops: int = 0
    servers: list = field(default_factory=list)
    issued: int = 0


@dataclass
class QueryResult:
    qid: object
    kind: str
    ids: list
    d2: Optional[list]
    dispatcher_hops: int
    server_visits: int
    issued_tick: int
    done_tick: int
    error: Optional[str] = None


class Dispatcher:
    def __init__(self, name: str, parent: Optional[str], children: list[str], leaf: bool,
                 net: SimNet, world: Mbr, on_result: Optional[Callable] = None):
        self.name = name
        self.parent = parent
        self.children = list(children)
        self.leaf = leaf
        self.net = net
        self.world = world
        self.samples = Dsd("delaunay", world)
        self.sample_of: dict[str, tuple] = {}
        self.loads: dict[str, int] = {c: 0 for c in children}
        self.starving: list[str] = []
        self.starving_up: list[tuple[str, str]] = []
        self._reported = ("unset",)
        self._reported_load: Optional[int] = None
        self.queries: dict = {}
        self.on_result = on_result

    def send(self, type_: str, dst: str, **payload) -> None:
        self.net.send(type_, self.name, dst, **payload)

    def handle(self, m: Message) -> None:
        getattr(self, "on_" + m.type)(m)

    # -- sample index ----------------------------------------------------

    def _child_no(self, child: str) -> int:
        return self.children.index(child)

    def on_SampleUpdate(self, m: Message) -> None:
        child = m.payload["child"]
        no = self._child_no(child)
        if m.payload["sample"] is None:
            self.sample_of.pop(child, None)
            if no in self.samples:
                self.samples.delete(no)
        else:
            p = (m.payload["x"], m.payload["y"])
            try:
                self.samples.put(no, p)
            except DuplicatePosition:
                # two children briefly report the same spot; keep the old one
                return
            self.sample_of[child] = (m.payload["sample"], p)
        self._report_sample()

    def representative(self) -> Optional[tuple]:
        """The child sample nearest the centroid of all child samples."""
        if not self.sample_of:
            return None
        pts = [s[1] for s in self.sample_of.values()]
        c = (sum(p[0] for p in pts) / len(pts), sum(p[1] for p in pts) / len(pts))
        return min(self.sample_of.values(), key=lambda s: (dist2(s[1], c), s[0]))

    def _report_sample(self) -> None:
        if self.parent is None:
            return
        rep = self.representative()
        if rep == self._reported:
            return
        self._reported = rep
        if rep is None:
            self.send("SampleUpdate", self.parent, child=self.name, sample=None, x=None, y=None)
        else:
            self.send("SampleUpdate", self.parent, child=self.name, sample=rep[0],
                      x=rep[1][0], y=rep[1][1])

    def nearest_child(self, p) -> Optional[str]:
        if not len(self.samples):
            return None
        return self.children[self.samples.knn_d2(p, 1)[0][1]]

    def route_point(self, p) -> str:
        child = self.nearest_child(p)
        return child if child is not None else self.children[0]

    # -- joins -----------------------------------------------------------

    def on_Join(self, m: Message) -> None:
        _, x, y, _ = m.payload["obj"]
        self.send("Join", self.route_point((x, y)), **m.payload)

    # -- queries ---------------------------------------------------------

    def on_Query(self, m: Message) -> None:
        """Entry point at the root, from the client."""
        pl = dict(m.payload)
        qid = pl["qid"]
        self.queries[qid] = QueryState(qid, pl["kind"], pl.get("k", 0), issued=self.net.tick)
        if not len(self.samples):
            if pl["kind"] == "knn":
                self._finish(qid, error="EmptyCluster")
            else:
                self._finish(qid)
            return
        pl.update(coord=self.name, weight=Fraction(1), hops=0, visited=[])
        if pl["kind"] == "knn":
            pl["cands"] = []
        else:
            pl.update(entries=[], seek=True)
        self._route_query(pl)

    def on_QueryRequest(self, m: Message) -> None:
        self._route_query(dict(m.payload))

    def _route_query(self, pl: dict) -> None:
        pl["hops"] += 1
        if pl["kind"] == "knn":
            targets = [self.route_point((pl["x"], pl["y"]))]
        else:
            xl, xh, yl, yh = pl["window"]
            targets = sorted(
                (c for c, (_, p) in self.sample_of.items() if xl <= p[0] <= xh and yl <= p[1] <= yh),
                key=self._child_no,
            )
            if not targets:
                targets = [self.route_point(((xl + xh) / 2.0, (yl + yh) / 2.0))]
        share = pl["weight"] / len(targets)
        for t in targets:
            self.send("QueryRequest", t, **dict(pl, weight=share))

    def on_QueryResponse(self, m: Message) -> None:
        pl = m.payload
        st = self.queries.get(pl["qid"])
        if st is None:
            return
        st.weight += pl["weight"]
        st.dispatcher_hops = max(st.dispatcher_hops, pl["hops"])
        st.servers.append(pl["server"])
        if st.kind == "knn":
            st.items.update(map(tuple, pl["items"]))
        else:
            st.items.update(pl["items"])
        if st.weight == 1:
            self._finish(pl["qid"])

    def _finish(self, qid, error: Optional[str] = None) -> None:
        st = self.queries.pop(qid)
        if st.kind == "knn":
            best = heapq.nsmallest(st.k, st.items)
            ids = [oid for _, oid in best]
            d2 = [d for d, _ in best]
        else:
            ids = sorted(st.items)
            d2 = None
        res = QueryResult(qid, st.kind, ids, d2, st.dispatcher_hops, len(st.servers),
                          st.issued, self.net.tick, error)
        self.send("QueryResult", "client", qid=qid, ids=ids, error=error)
        if self.on_result is not None:
            self.on_result(res)

    # -- loads and empty zones -------------------------------------------

    def total_load(self) -> int:
        return sum(self.loads.values())

    def on_LoadReport(self, m: Message) -> None:
        child = m.payload["server"]
        load = m.payload["load"]
        self.loads[child] = load
        if load == 0:
            if self.leaf and child not in self.starving:
                self.starving.append(child)
        self._serve_starving()
        if self.starving_up:
            waiting, self.starving_up = self.starving_up, []
            for empty, via in waiting:
                self._escalated(empty, via)
        if self.parent is not None and self.total_load() != self._reported_load:
            self._reported_load = self.total_load()
            self.send("LoadReport", self.parent, server=self.name, load=self._reported_load,
                      degree=0)

    def _heaviest(self, exclude=()) -> Optional[str]:
        cands = [c for c in self.children if c not in exclude and self.loads.get(c, 0) >= 2]
        if not cands:
            return None
        return max(cands, key=lambda c: (self.loads[c], -self._child_no(c)))

    def _serve_starving(self) -> None:
        still = []
        for empty in self.starving:
            if self.leaf and self.loads.get(empty, 0) > 0:
                continue
            donor = self._heaviest(exclude=(empty,) if self.leaf else ())
            if donor is not None:
                self.send("AdoptRequest", donor, empty=empty)
                # assume the donor splits in half until it says otherwise
                self.loads[donor] //= 2
                continue
            if self.parent is not None and self.leaf:
                self.send("AdoptEscalate", self.parent, empty=empty, via=self.name)
                continue
            still.append(empty)
        self.starving = still

    def on_AdoptEscalate(self, m: Message) -> None:
        """A child dispatcher cannot feed one of its servers; find a donor
        elsewhere or pass the request further up."""
        self._escalated(m.payload["empty"], m.payload["via"])

    def _escalated(self, empty: str, via: str) -> None:
        donor = self._heaviest(exclude=(via,))
        if donor is not None:
            self.send("AdoptRequest", donor, empty=empty)
            self.loads[donor] //= 2
        elif self.parent is not None:
            self.send("AdoptEscalate", self.parent, empty=empty, via=self.name)
        elif (empty, via) not in self.starving_up:
            # nobody can help yet; retry when loads change
            self.starving_up.append((empty, via))

    def on_AdoptRequest(self, m: Message) -> None:
        donor = self._heaviest()
        if donor is not None:
            self.send("AdoptRequest", donor, **m.payload)
            self.loads[donor] //= 2
        elif self.parent is not None:
            self.send("AdoptEscalate", self.parent, empty=m.payload["empty"], via=self.name)

    def on_AdoptDecline(self, m: Message) -> None:
        self.loads[m.payload["server"]] = m.payload["load"]
        empty = m.payload["empty"]
        if self.leaf and empty in self.children:
            if empty not in self.starving:
                self.starving.append(empty)
            self._serve_starving()
        elif self.parent is not None:
            self.send("AdoptEscalate", self.parent, empty=empty, via=self.name)
