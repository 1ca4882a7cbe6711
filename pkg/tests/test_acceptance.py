"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are collected and repeated in the terminal summary, so they show
up even without ``-s``.
"""

import math
import random
import statistics
import time

import numpy as np
import pytest
from scipy.spatial import Delaunay as QhullDelaunay, cKDTree

from conftest import ACCEPTANCE_LINES
from movingdb import workload as wl
from movingdb.cluster import Cluster, ClusterSpec
from movingdb.cluster.cluster import server_name
from movingdb.cluster.dispatcher import Dispatcher
from movingdb.cluster.script import parse_script, run_script_on_grid
from movingdb.cluster.server import ZoneServer
from movingdb.delaunay import Triangulation, build
from movingdb.dsd import Dsd, make_index
from movingdb.geom import UNIT_SQUARE, Mbr, in_circle_sign
from movingdb.rtree import RTree
from movingdb.zones import GridPartition


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def check(n: int, ok: bool, detail: str) -> None:
    record(n, ok, detail)
    assert ok, detail


# -- oracles ------------------------------------------------------------------


def qhull_edges(points: dict) -> set:
    ids = sorted(points)
    arr = np.array([points[i] for i in ids])
    out = set()
    for a, b, c in QhullDelaunay(arr).simplices:
        a, b, c = ids[a], ids[b], ids[c]
        out |= {frozenset((a, b)), frozenset((b, c)), frozenset((a, c))}
    return out


def empty_circle_audit(t: Triangulation) -> int:
    """Count (face, vertex) pairs with the vertex strictly inside the face's
    circumcircle.  Candidates come from a k-d tree ball query around the
    float circumcentre with a generous margin; the decision is the exact
    predicate."""
    ids = list(t.ids())
    pos = {i: t.position(i) for i in ids}
    tree = cKDTree(np.array([pos[i] for i in ids]))
    bad = 0
    for face in t.finite_faces():
        a, b, c = (pos[i] for i in face)
        d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y))
        a2, b2, c2 = a.x ** 2 + a.y ** 2, b.x ** 2 + b.y ** 2, c.x ** 2 + c.y ** 2
        ux = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d
        uy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d
        r = math.hypot(a.x - ux, a.y - uy)
        for j in tree.query_ball_point((ux, uy), r * (1 + 1e-6) + 1e-9):
            oid = ids[j]
            if oid in face:
                continue
            p = pos[oid]
            if in_circle_sign(a.x, a.y, b.x, b.y, c.x, c.y, p.x, p.y) > 0:
                bad += 1
    return bad


def brute_knn(points: dict, q, k):
    out = []
    for oid, p in points.items():
        dx, dy = p[0] - q[0], p[1] - q[1]
        out.append((dx * dx + dy * dy, oid))
    return sorted(out)[:k]


def brute_range(points: dict, w):
    return {oid for oid, p in points.items() if w[0] <= p[0] <= w[1] and w[2] <= p[1] <= w[3]}


def cluster_oracle(c: Cluster) -> Dsd:
    d = Dsd()
    for oid in c.dir.owner:
        d.put(oid, c.dir.position(oid))
    return d


def qhull_contiguity(c: Cluster) -> bool:
    """Zone connectivity over a Delaunay graph computed by qhull from the
    directory positions, independent of the cluster's own triangulation."""
    pos = {oid: tuple(c.dir.position(oid)) for oid in c.dir.owner}
    if len(pos) < 3:
        return True
    parent = {o: o for o in pos}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    owner = c.dir.owner
    for e in qhull_edges(pos):
        a, b = tuple(e)
        if owner[a] == owner[b]:
            parent[find(a)] = find(b)
    roots = {}
    for o, s in owner.items():
        roots.setdefault(s, set()).add(find(o))
    return all(len(r) == 1 for r in roots.values())


# -- 1 ------------------------------------------------------------------------


def test_criterion_1_delaunay_correctness():
    t0 = time.time()
    audits = rebuilds = bad = 0
    for seed in range(20):
        rng = random.Random(1000 + seed)
        t = Triangulation(UNIT_SQUARE)
        pts: dict = {}
        next_id = 0
        checkpoints = set(rng.sample(range(1, 5001), 10))
        for step in range(1, 5001):
            r = rng.random()
            if pts and (r < 0.2 or len(pts) >= 2000):
                oid = rng.choice(list(pts))
                t.remove(oid)
                del pts[oid]
            elif pts and r < 0.5:
                oid = rng.choice(list(pts))
                pts[oid] = (rng.random(), rng.random())
                t.move(oid, pts[oid])
            else:
                pts[next_id] = (rng.random(), rng.random())
                t.insert(next_id, pts[next_id])
                next_id += 1
            if step % 100 == 0:
                t.check_euler()
                t.check_adjacency()
                bad += empty_circle_audit(t)
                audits += 1
            if step in checkpoints:
                edges = t.edges()
                if edges != build(pts).edges() or edges != qhull_edges(pts):
                    bad += 1
                rebuilds += 1
    elapsed = time.time() - t0
    ok = bad == 0 and elapsed <= 300
    check(1, ok, f"{audits} audits, {rebuilds} rebuild checkpoints, {bad} violations, {elapsed:.0f}s")


# -- 2 ------------------------------------------------------------------------


def _population(seed: int, n: int = 1000) -> dict:
    rng = random.Random(seed)
    pts = {}
    # odd seeds use a coarse lattice so distance ties are common
    lattice = seed % 2 == 1
    while len(pts) < n:
        if lattice:
            p = (rng.randrange(64) / 64, rng.randrange(64) / 64)
        else:
            p = (rng.random(), rng.random())
        if p not in pts.values():
            pts[len(pts)] = p
    return pts


def test_criterion_2_query_exactness():
    mismatches = total = 0
    for seed in range(20):
        pts = _population(seed)
        rng = random.Random(5000 + seed)
        dsds = {}
        for backend in ("delaunay", "rtree"):
            d = Dsd(backend)
            for oid, p in pts.items():
                d.put(oid, p)
            dsds[backend] = d
        queries = []
        for i in range(200):
            q = (rng.random(), rng.random()) if i % 4 else (rng.randrange(65) / 64, rng.randrange(65) / 64)
            queries.append((q, (1, 5, 30)[i % 3]))
        windows = []
        for i in range(200):
            x, y, s = rng.random(), rng.random(), rng.uniform(0, 0.2)
            if i % 4 == 0:
                x, y, s = rng.randrange(64) / 64, rng.randrange(64) / 64, rng.randrange(1, 8) / 64
            windows.append((x, min(1.0, x + s), y, min(1.0, y + s)))
        for d in dsds.values():
            for q, k in queries:
                total += 1
                mismatches += d.knn_d2(q, k) != brute_knn(pts, q, k)
            for w in windows:
                total += 1
                mismatches += d.range(w) != brute_range(pts, w)
    check(2, mismatches == 0, f"{total} queries over 20 seeds x 2 backends, {mismatches} mismatches")


# -- 3 ------------------------------------------------------------------------


def test_criterion_3_cross_backend():
    specs = [
        wl.WorkloadSpec(rounds=10, per_round_joins=200, per_round_queries=50, per_round_moves=100,
                        distribution=dist, query_kind=qk, seed=seed)
        for seed, dist, qk in [
            (1, wl.Uniform(), wl.Knn(1)),
            (2, wl.Uniform(), wl.Knn(10)),
            (3, wl.ParetoLevy(), wl.Knn(5)),
            (4, wl.Uniform(), wl.Range(0.05)),
            (5, wl.ParetoLevy(), wl.Range(0.02)),
        ]
    ]
    compared = differ = 0
    for spec in specs:
        idx = {"delaunay": Triangulation(spec.world), "rtree": RTree()}
        for ops in wl.operations(spec):
            for oid, p in ops.joins:
                for t in idx.values():
                    t.insert(oid, p)
            for q in ops.queries:
                if isinstance(spec.query_kind, wl.Knn):
                    answers = [t.k_nearest_with_d2(q, spec.query_kind.k) for t in idx.values()]
                else:
                    h = spec.query_kind.window_side / 2
                    w = Mbr(q[0] - h, q[0] + h, q[1] - h, q[1] + h)
                    answers = [t.range_query(w) for t in idx.values()]
                compared += 1
                differ += answers[0] != answers[1]
            for oid, p in ops.moves:
                for t in idx.values():
                    t.move(oid, p)
    # the database layer, filtered queries included
    rng = random.Random(33)
    a, b = Dsd("delaunay"), Dsd("rtree")
    for i in range(1500):
        p = (rng.random(), rng.random())
        tags = {"taxi"} if rng.random() < 0.3 else set()
        a.put(i, p, tags)
        b.put(i, p, tags)
    for _ in range(200):
        q = (rng.random(), rng.random())
        compared += 2
        differ += a.knn(q, 8) != b.knn(q, 8)
        differ += a.knn_filtered(q, 8, "taxi") != b.knn_filtered(q, 8, "taxi")
    check(3, differ == 0, f"{compared} paired queries, {differ} differences")


# -- 4 ------------------------------------------------------------------------


def test_criterion_4_rtree_audit():
    audits = 0
    worst_height = 0
    for seed in range(10):
        rng = random.Random(4000 + seed)
        M = (4, 6, 8, 16)[seed % 4]
        t = RTree(M)
        live: dict = {}
        next_id = 0
        for _ in range(10_000):
            r = rng.random()
            if live and (r < 0.3 or len(live) >= 500):
                oid = rng.choice(list(live))
                t.remove(oid)
                del live[oid]
            elif live and r < 0.6:
                oid = rng.choice(list(live))
                live[oid] = (rng.random(), rng.random())
                t.move(oid, live[oid])
            else:
                live[next_id] = (rng.random(), rng.random())
                t.insert(next_id, live[next_id])
                next_id += 1
            t.audit()
            audits += 1
            worst_height = max(worst_height, t.height)
        assert {i: t.position(i) for i in t.ids()} == live
    check(4, True, f"{audits} audits after mutations across 10 seeds, max height {worst_height}")


# -- 5 ------------------------------------------------------------------------


def _median_query_us(backend: str, n: int, query_kind, queries: int, batches: int = 9):
    """Fill an index with n uniform objects through the benchmark runner, then
    run query-only rounds on it and return the median per-query cost and the
    median walk length.  The median over batches keeps short bursts of load
    from other processes on a shared CPU out of the ratio."""
    idx = make_index(backend, UNIT_SQUARE)
    wl.run_benchmark(wl.WorkloadSpec(rounds=1, per_round_joins=n, per_round_queries=0,
                                     per_round_moves=0, seed=55), index=idx)
    assert len(idx) == n
    spec = wl.WorkloadSpec(rounds=batches, per_round_joins=0, per_round_queries=queries,
                           per_round_moves=0, query_kind=query_kind, seed=56)
    rounds = wl.run_benchmark(spec, index=idx)
    us = statistics.median(r.query_us_per_op for r in rounds)
    walks = [r.walk_length_mean for r in rounds if r.walk_length_mean is not None]
    return us, (statistics.median(walks) if walks else None)


def test_criterion_5_scaling_trends():
    t0 = time.time()
    sizes = (10_000, 40_000, 160_000)
    knn, walk, rt = {}, {}, {}
    for n in sizes:
        knn[n], walk[n] = _median_query_us("delaunay", n, wl.Knn(5), 500)
        # the window shrinks with N so the expected number of hits stays at
        # 16 and the ratio measures index overhead, not output size
        rt[n], _ = _median_query_us("rtree", n, wl.Range(math.sqrt(16.0 / n)), 2000)
    d_ratio = knn[sizes[-1]] / knn[sizes[0]]
    r_ratio = rt[sizes[-1]] / rt[sizes[0]]
    elapsed = time.time() - t0
    ok = 2 <= d_ratio <= 8 and 1 <= r_ratio <= 4 and elapsed <= 600

    def fmt(d):
        return "{" + ", ".join(f"{n}: {v:.1f}" for n, v in d.items()) + "}"

    detail = (f"delaunay knn us {fmt(knn)} ratio {d_ratio:.2f} (walk {walk[sizes[0]]:.0f}->"
              f"{walk[sizes[-1]]:.0f}); rtree range us {fmt(rt)} ratio {r_ratio:.2f}; {elapsed:.0f}s")
    check(5, ok, detail)


# -- 6 ------------------------------------------------------------------------


def test_criterion_6_table_consistency():
    t0 = time.time()
    ref = wl.reference_table()
    got = {name: wl.capacity_for_interval(ref[name], 1.0) for name in ("CGAL", "GTS", "O-Tree")}
    want = {"CGAL": 26_000, "GTS": 17_000, "O-Tree": 8_000}
    ok = all(abs(got[k] - want[k]) <= 0.35 * want[k] for k in want) and time.time() - t0 < 1
    check(6, ok, f"T=1s capacities {got} vs published {want}")


# -- 7 ------------------------------------------------------------------------


def test_criterion_7_fixed_zone_baseline():
    mismatches = total = 0
    for seed in range(10):
        rng = random.Random(7000 + seed)
        g = GridPartition(4, 4)
        central = Dsd()
        for i in range(2000):
            p = (rng.random(), rng.random())
            g.insert(i, p)
            central.put(i, p)
        for j in range(200):
            if j % 2:
                q, k = (rng.random(), rng.random()), rng.choice([1, 5, 30])
                mismatches += g.knn(q, k) != central.knn(q, k)
            else:
                x, y, s = rng.random(), rng.random(), rng.uniform(0, 0.4)
                w = (x, min(1, x + s), y, min(1, y + s))
                mismatches += g.range(w) != central.range(w)
            total += 1
    lines = ["TICK 0"]
    for i in range(400):
        lines.append(f"JOIN {i} {rng.random()} {rng.random()}")
    lines.append("TICK 10")
    for i in range(400):
        lines.append(f"MOVE {i} {rng.uniform(0.51, 0.74)} {rng.uniform(0.26, 0.49)}")
    lines.append("RANGE all 0 1 0 1")
    lines.append("ASSERT_RESULT all " + ",".join(map(str, range(400))))
    grid = GridPartition(4, 4)
    rep = run_script_on_grid(parse_script("\n".join(lines)), grid)
    loads = grid.loads()
    hot = max(loads) == 400 and loads.count(0) == 15 and rep.ok
    check(7, mismatches == 0 and hot,
          f"{total} queries, {mismatches} mismatches; hotspot loads max={max(loads)} zeros={loads.count(0)}")


# -- 8 ------------------------------------------------------------------------


def test_criterion_8_sdsd_exactness():
    c = Cluster(ClusterSpec(servers=16))
    rng = random.Random(23)
    for i in range(5000):
        c.join(i, (rng.random(), rng.random()))
    c.settle()
    assert c.quiescent()
    c.audit_partition()
    d = cluster_oracle(c)
    expected = {}
    for j in range(200):
        if j % 2:
            q, k = (rng.random(), rng.random()), rng.choice([1, 5, 30])
            c.knn(j, q, k)
            expected[j] = [oid for oid, _ in d.knn(q, k)]
        else:
            x, y, s = rng.random(), rng.random(), rng.uniform(0, 0.3)
            w = (x, min(1, x + s), y, min(1, y + s))
            c.range(j, w)
            expected[j] = sorted(d.range(w))
    c.settle()
    # border-straddling kNN: queries at points whose true answer spans zones
    border = 0
    probe = random.Random(230)
    while border < 50:
        a = probe.randrange(5000)
        b = next(iter(sorted(x for x in c.dir.neighbors(a) if c.owner_of(x) != c.owner_of(a))), None)
        if b is None:
            continue
        pa, pb = c.dir.position(a), c.dir.position(b)
        q = ((pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2)
        want = [oid for oid, _ in d.knn(q, 10)]
        if len({c.owner_of(o) for o in want}) < 2:
            continue
        qid = ("border", border)
        c.knn(qid, q, 10)
        expected[qid] = want
        border += 1
    c.settle()
    wrong = [q for q, ids in expected.items() if c.results[q].ids != ids]
    multi = sum(1 for q in expected if c.results[q].server_visits > 1)
    check(8, not wrong, f"{len(expected)} queries ({border} border-straddling kNN, {multi} multi-server), "
          f"{len(wrong)} wrong")


# -- 9 ------------------------------------------------------------------------


def test_criterion_9_partition_and_contiguity():
    spec = ClusterSpec(servers=8)
    c = Cluster(spec)
    rng = random.Random(11)
    pos = {}
    for i in range(400):
        pos[i] = wl.gen_uniform(UNIT_SQUARE, rng)
        c.join(i, pos[i])
    quiescent = failures = 0
    qhull_checks = 0
    for tick in range(10_000):
        for _ in range(2):
            oid = rng.randrange(400)
            p = wl.gen_levy_step(pos[oid], 1.5, 0.005, rng)
            if p in pos.values():
                continue
            pos[oid] = p
            c.move(oid, p)
        c.step()
        try:
            c.audit_ownership()
            c.audit_contiguity()
            if c.quiescent():
                quiescent += 1
                c.audit_partition()
                if tick % 10 == 0:
                    qhull_checks += 1
                    if not qhull_contiguity(c):
                        raise AssertionError(f"qhull contiguity failed at tick {c.tick}")
        except AssertionError as exc:
            failures += 1
            first = str(exc)
            break
    detail = f"{c.tick} ticks, {quiescent} quiescent ticks audited, {qhull_checks} independent checks"
    if failures:
        detail += f"; first failure: {first}"
    check(9, failures == 0, detail)


# -- 10 -----------------------------------------------------------------------


def test_criterion_10_flash_crowd():
    c = Cluster(ClusterSpec(servers=8, rho=1.25))
    rng = random.Random(10)
    for i in range(2000):
        c.join(i, (rng.random(), rng.random()))
    c.settle()
    centre = c.dir.position(c.servers["z0"].sample)
    start = c.tick
    taken = set()
    for i in range(2000):
        while True:
            r, th = 0.05 * math.sqrt(rng.random()), rng.uniform(0, 2 * math.pi)
            p = (min(1, max(0, centre[0] + r * math.cos(th))), min(1, max(0, centre[1] + r * math.sin(th))))
            if p not in taken:
                taken.add(p)
                break
        c.move(i, p)
    peak = 0.0
    converged = None
    for _ in range(500):
        c.step()
        c.audit_contiguity()
        c.audit_ownership()
        loads = c.loads()
        peak = max(peak, max(loads) / len(c.dir.owner) * len(loads))
        if converged is None and c.balance_ratio() <= 1.25 and c.tick - start > 2:
            converged = c.tick - start
    final = c.balance_ratio()
    ok = converged is not None and final <= 1.25
    check(10, ok, f"peak max/mean {peak:.2f}, max/min <= 1.25 after {converged} ticks, "
          f"final ratio {final:.3f}, contiguity held every tick")


# -- 11 -----------------------------------------------------------------------


class FlatCluster(Cluster):
    """One dispatcher over every server, built without the hierarchy code."""

    def _build(self):
        spec = self.spec
        names = [server_name(i) for i in range(spec.servers)]
        self.root = Dispatcher("d0.0", None, names, True, self.net, spec.world, on_result=self._record)
        self.dispatchers = {"d0.0": self.root}
        self.servers = {}
        for i, name in enumerate(names):
            self.dir.register(name)
            self.servers[name] = ZoneServer(name, i, "d0.0", self.net, self.dir)
        self.nodes = {**self.dispatchers, **self.servers}
        self._order = names
        for s in names:
            self.servers[s].report()


def _scenario(c: Cluster, seed: int, n: int, queries: int):
    rng = random.Random(seed)
    for i in range(n):
        c.join(i, (rng.random(), rng.random()))
    c.settle()
    d = cluster_oracle(c)
    want = {}
    for j in range(queries):
        if j % 2:
            q, k = (rng.random(), rng.random()), rng.choice([1, 5, 30])
            c.knn(j, q, k)
            want[j] = [oid for oid, _ in d.knn(q, k)]
        else:
            x, y, s = rng.random(), rng.random(), rng.uniform(0, 0.3)
            w = (x, min(1, x + s), y, min(1, y + s))
            c.range(j, w)
            want[j] = sorted(d.range(w))
    c.settle()
    for _ in range(20):
        c.move(rng.randrange(n), (rng.random(), rng.random()))
    c.settle()
    return want


def test_criterion_11_hierarchy():
    c = Cluster(ClusterSpec(servers=64, levels=2))
    want = _scenario(c, 111, 3000, 200)
    wrong = sum(c.results[q].ids != ids for q, ids in want.items())
    hops = sorted({c.results[q].dispatcher_hops for q in want})
    leaf_samples = max(len(d.sample_of) for d in c.dispatchers.values())

    flat_lines, tree_lines = [], []
    flat = FlatCluster(ClusterSpec(servers=16), trace=flat_lines.append)
    one = Cluster(ClusterSpec(servers=16, levels=1), trace=tree_lines.append)
    _scenario(flat, 112, 1500, 60)
    _scenario(one, 112, 1500, 60)
    same = flat_lines == tree_lines and len(flat_lines) > 0
    ok = wrong == 0 and hops == [2] and leaf_samples <= 8 and same
    check(11, ok, f"64 servers L=2: {len(want)} queries, {wrong} wrong, hop counts {hops}, "
          f"<= {leaf_samples} samples per dispatcher; L=1 trace identical to flat: {same} "
          f"({len(flat_lines)} lines)")


# -- 12 -----------------------------------------------------------------------


def test_criterion_12_determinism():
    spec = wl.WorkloadSpec(rounds=10, per_round_joins=300, per_round_queries=100, per_round_moves=300,
                           distribution=wl.ParetoLevy(), seed=12)
    ta, tb = [], []
    csv_a = wl.rounds_csv(wl.run_benchmark(spec, "delaunay", trace=ta), "delaunay")
    csv_b = wl.rounds_csv(wl.run_benchmark(spec, "delaunay", trace=tb), "delaunay")
    ops_same = ta == tb and wl.trace_hash(spec) == wl.trace_hash(spec)
    csv_same = wl.mask_timing(csv_a) == wl.mask_timing(csv_b)

    traces = []
    for _ in range(2):
        lines = []
        c = Cluster(ClusterSpec(servers=16, levels=2), trace=lines.append)
        _scenario(c, 12, 800, 40)
        traces.append("\n".join(lines).encode())
    msg_same = traces[0] == traces[1]
    ok = ops_same and csv_same and msg_same
    check(12, ok, f"operation traces equal: {ops_same} ({len(ta)} lines), masked CSV equal: {csv_same}, "
          f"message traces equal: {msg_same} ({len(traces[0])} bytes)")
