"""Round-based benchmark: workload generation, timing and capacity estimates.

A run has ``rounds`` rounds of three separately timed steps: ``joins`` new
objects are inserted, ``queries`` spatial queries are issued from fresh
random points, then ``moves`` existing objects are relocated.  Objects are
never removed, so the population after round ``r`` (1-based) is
``r * joins``.

The operation stream is generated ahead of each step by ``operations()``
and is independent of the backend, so two backends fed the same spec see
exactly the same ids, positions and query points.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import random
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Iterator, Optional, Sequence, Union

from .errors import ConfigError, EmptyTable
from .geom import UNIT_SQUARE, Mbr, Point


@dataclass(frozen=True)
class Uniform:
    pass


@dataclass(frozen=True)
class ParetoLevy:
    alpha: float = 1.5
    min_step: float = 0.001
    hotspots: int = 8
    spread: float = 0.01


@dataclass(frozen=True)
class Knn:
    k: int = 1


@dataclass(frozen=True)
class Range:
    window_side: float = 0.01


Distribution = Union[Uniform, ParetoLevy]
QueryKind = Union[Knn, Range]


@dataclass(frozen=True)
class WorkloadSpec:
    rounds: int = 40
    per_round_joins: int = 250
    per_round_queries: int = 250
    per_round_moves: int = 250
    distribution: Distribution = field(default_factory=Uniform)
    query_kind: QueryKind = field(default_factory=Knn)
    seed: int = 0
    world: Mbr = UNIT_SQUARE

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        for name in ("per_round_joins", "per_round_queries", "per_round_moves"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        d = self.distribution
        if isinstance(d, ParetoLevy):
            if d.alpha <= 0 or d.min_step <= 0 or d.hotspots < 1 or d.spread <= 0:
                raise ConfigError(f"invalid Pareto/Levy parameters {d}")
        q = self.query_kind
        if isinstance(q, Knn) and q.k < 1:
            raise ConfigError("k must be >= 1")
        if isinstance(q, Range) and q.window_side < 0:
            raise ConfigError("window side must be >= 0")

    @classmethod
    def for_population(cls, n: int, rounds: int = 40, **kw) -> "WorkloadSpec":
        """Default sizing: joins = queries = moves = n / rounds per round."""
        per = max(1, n // rounds)
        kw.setdefault("per_round_queries", per)
        kw.setdefault("per_round_moves", per)
        return cls(rounds=rounds, per_round_joins=per, **kw)

    def describe(self) -> dict:
        out = asdict(self)
        out["distribution"] = {"kind": type(self.distribution).__name__, **asdict(self.distribution)}
        out["query_kind"] = {"kind": type(self.query_kind).__name__, **asdict(self.query_kind)}
        out["world"] = list(self.world)
        return out


@dataclass
class RoundStats:
    round: int
    population: int
    join_seconds: float
    query_seconds: float
    move_seconds: float
    join_us_per_op: float
    query_us_per_op: float
    move_us_per_op: float
    walk_length_mean: Optional[float] = None


# -- generators ---------------------------------------------------------------


def reflect(v: float, lo: float, hi: float) -> float:
    w = hi - lo
    if w <= 0:
        return lo
    t = (v - lo) % (2.0 * w)
    if t > w:
        t = 2.0 * w - t
    return lo + t


def gen_uniform(world: Mbr, rng: random.Random) -> Point:
    return Point(rng.uniform(world[0], world[1]), rng.uniform(world[2], world[3]))


def pareto_length(alpha: float, scale: float, rng: random.Random) -> float:
    # paretovariate returns values >= 1 with P(X > x) = x**-alpha
    return scale * rng.paretovariate(alpha)


def gen_levy_step(current: Sequence[float], alpha: float, min_step: float, rng: random.Random,
                  world: Mbr = UNIT_SQUARE) -> Point:
    theta = rng.uniform(0.0, 2.0 * math.pi)
    length = pareto_length(alpha, min_step, rng)
    x = current[0] + length * math.cos(theta)
    y = current[1] + length * math.sin(theta)
    return Point(reflect(x, world[0], world[1]), reflect(y, world[2], world[3]))


def gen_hotspot_point(centers: Sequence[Point], dist: ParetoLevy, rng: random.Random,
                      world: Mbr) -> Point:
    c = centers[rng.randrange(len(centers))]
    theta = rng.uniform(0.0, 2.0 * math.pi)
    r = pareto_length(dist.alpha, dist.spread, rng) - dist.spread
    return Point(
        reflect(c[0] + r * math.cos(theta), world[0], world[1]),
        reflect(c[1] + r * math.sin(theta), world[2], world[3]),
    )


class _Placer:
    """Draws positions for the chosen distribution, never reusing one."""

    def __init__(self, spec: WorkloadSpec, rng: random.Random):
        self.spec = spec
        self.rng = rng
        self.taken: set = set()
        d = spec.distribution
        self.centers = (
            [gen_uniform(spec.world, rng) for _ in range(d.hotspots)]
            if isinstance(d, ParetoLevy)
            else []
        )

    def _fresh(self, draw) -> Point:
        while True:
            p = draw()
            if p not in self.taken:
                self.taken.add(p)
                return p

    def place(self) -> Point:
        d = self.spec.distribution
        if isinstance(d, ParetoLevy):
            return self._fresh(lambda: gen_hotspot_point(self.centers, d, self.rng, self.spec.world))
        return self._fresh(lambda: gen_uniform(self.spec.world, self.rng))

    def relocate(self, old: Point) -> Point:
        d = self.spec.distribution
        self.taken.discard(old)
        if isinstance(d, ParetoLevy):
            return self._fresh(
                lambda: gen_levy_step(old, d.alpha, d.min_step, self.rng, self.spec.world)
            )
        return self._fresh(lambda: gen_uniform(self.spec.world, self.rng))


@dataclass
class RoundOps:
    round: int
    joins: list  # (id, Point)
    queries: list  # Point
    moves: list  # (id, Point)


def operations(spec: WorkloadSpec) -> Iterator[RoundOps]:
    rng = random.Random(spec.seed)
    placer = _Placer(spec, rng)
    positions: list[Point] = []
    for r in range(1, spec.rounds + 1):
        joins = []
        for _ in range(spec.per_round_joins):
            oid = len(positions)
            p = placer.place()
            positions.append(p)
            joins.append((oid, p))
        queries = [gen_uniform(spec.world, rng) for _ in range(spec.per_round_queries)]
        moves = []
        if positions:
            for _ in range(spec.per_round_moves):
                oid = rng.randrange(len(positions))
                p = placer.relocate(positions[oid])
                positions[oid] = p
                moves.append((oid, p))
        yield RoundOps(r, joins, queries, moves)


def trace_lines(ops: RoundOps) -> Iterator[str]:
    for oid, p in ops.joins:
        yield f"{ops.round},J,{oid},{p[0].hex()},{p[1].hex()}"
    for q in ops.queries:
        yield f"{ops.round},Q,{q[0].hex()},{q[1].hex()}"
    for oid, p in ops.moves:
        yield f"{ops.round},M,{oid},{p[0].hex()},{p[1].hex()}"


def trace_hash(spec: WorkloadSpec) -> str:
    h = hashlib.sha256()
    for ops in operations(spec):
        for line in trace_lines(ops):
            h.update(line.encode())
            h.update(b"\n")
    return h.hexdigest()


# -- benchmark ----------------------------------------------------------------


def _query_fn(index, spec: WorkloadSpec):
    qk = spec.query_kind
    if isinstance(qk, Knn):
        k = qk.k
        return lambda q: index.k_nearest_with_d2(q, k)
    half = qk.window_side / 2.0
    return lambda q: index.range_query(Mbr(q[0] - half, q[0] + half, q[1] - half, q[1] + half))


def _per_op_us(seconds: float, n: int) -> float:
    return seconds * 1e6 / n if n else 0.0


def run_benchmark(spec: WorkloadSpec, backend: str = "delaunay", index=None,
                  trace: Optional[list] = None) -> list[RoundStats]:
    from .dsd import make_index

    if index is None:
        index = make_index(backend, spec.world)
    query = _query_fn(index, spec)
    clock = time.process_time
    walk_stats = hasattr(index, "walk_length_mean")
    out = []
    for ops in operations(spec):
        if trace is not None:
            trace.extend(trace_lines(ops))
        t0 = clock()
        for oid, p in ops.joins:
            index.insert(oid, p)
        t1 = clock()
        if walk_stats:
            index.reset_walk_stats()
        if ops.queries and len(index):
            for q in ops.queries:
                query(q)
        t2 = clock()
        walk = index.walk_length_mean() if walk_stats else None
        for oid, p in ops.moves:
            index.move(oid, p)
        t3 = clock()
        js, qs, ms = t1 - t0, t2 - t1, t3 - t2
        out.append(
            RoundStats(
                round=ops.round,
                population=len(index),
                join_seconds=js,
                query_seconds=qs,
                move_seconds=ms,
                join_us_per_op=_per_op_us(js, len(ops.joins)),
                query_us_per_op=_per_op_us(qs, len(ops.queries)),
                move_us_per_op=_per_op_us(ms, len(ops.moves)),
                walk_length_mean=walk,
            )
        )
    return out


ROUNDS_HEADER = [
    "round", "backend", "population", "join_s", "query_s", "move_s",
    "join_us_per_op", "query_us_per_op", "move_us_per_op",
]
TIMING_COLUMNS = {"join_s", "query_s", "move_s", "join_us_per_op", "query_us_per_op",
                  "move_us_per_op", "t_min_s"}


def rounds_csv(stats: Sequence[RoundStats], backend: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROUNDS_HEADER)
    for s in stats:
        w.writerow([
            s.round, backend, s.population,
            f"{s.join_seconds:.6f}", f"{s.query_seconds:.6f}", f"{s.move_seconds:.6f}",
            f"{s.join_us_per_op:.3f}", f"{s.query_us_per_op:.3f}", f"{s.move_us_per_op:.3f}",
        ])
    return buf.getvalue()


def mask_timing(csv_text: str) -> str:
    """Blank out the timing columns so that runs can be compared byte for byte."""
    rows = list(csv.reader(io.StringIO(csv_text)))
    if not rows:
        return ""
    header = rows[0]
    masked = [i for i, name in enumerate(header) if name in TIMING_COLUMNS]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows[1:]:
        w.writerow(["*" if i in masked else v for i, v in enumerate(row)])
    return buf.getvalue()


# -- timing tables and capacity -----------------------------------------------


@dataclass
class TimingTable:
    backend: str
    rows: list  # (population, t_min_s), populations strictly increasing

    def __post_init__(self):
        self.rows = sorted((int(n), float(t)) for n, t in self.rows)
        pops = [n for n, _ in self.rows]
        if len(set(pops)) != len(pops):
            raise ConfigError(f"repeated population in table {self.backend}")


def min_update_interval(stats: Sequence[RoundStats], skip_warmup: bool = True) -> list[tuple[int, float]]:
    """``T_min(N) = N * (move cost + query cost)`` per object, at each population."""
    if not stats:
        raise EmptyTable("no round statistics")
    use = list(stats[1:]) if skip_warmup and len(stats) > 1 else list(stats)
    return [
        (s.population, s.population * (s.move_us_per_op + s.query_us_per_op) * 1e-6)
        for s in use
    ]


def capacity_detail(table: TimingTable, T: float) -> tuple[int, bool]:
    """Largest population whose ``T_min`` fits in ``T`` under a piecewise
    power-law model; the flag tells whether the table was extrapolated."""
    rows = [(n, t) for n, t in table.rows if n > 0 and t > 0]
    if len(rows) < 2:
        raise EmptyTable(f"need at least two positive rows, table {table.backend!r} has {len(rows)}")
    if T <= 0:
        raise ConfigError("interval must be positive")
    idx = [i for i, (_, t) in enumerate(rows) if t <= T]
    last = len(rows) - 1
    if not idx:
        i, j, extrapolated = 0, 1, True
    else:
        i = idx[-1]
        if i == last:
            i, j, extrapolated = last - 1, last, True
        else:
            j, extrapolated = i + 1, False
    (n1, t1), (n2, t2) = rows[i], rows[j]
    if t2 <= t1:
        # flat or falling pair: no power law to follow
        return (n2 if T >= t2 else n1), extrapolated
    slope = (math.log(n2) - math.log(n1)) / (math.log(t2) - math.log(t1))
    n = math.exp(math.log(n1) + (math.log(T) - math.log(t1)) * slope)
    return int(round(n)), extrapolated


def capacity_for_interval(table: TimingTable, T: float) -> int:
    return capacity_detail(table, T)[0]


def timing_csv(tables: Sequence[TimingTable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["backend", "population", "t_min_s"])
    for t in tables:
        for n, s in t.rows:
            w.writerow([t.backend, n, f"{s:.9g}"])
    return buf.getvalue()


def parse_timing_csv(text: str) -> dict[str, TimingTable]:
    rows: dict[str, list] = {}
    reader = csv.DictReader(io.StringIO(text))
    missing = {"backend", "population", "t_min_s"} - set(reader.fieldnames or [])
    if missing:
        raise ConfigError(f"timing table lacks columns {sorted(missing)}")
    for rec in reader:
        rows.setdefault(rec["backend"], []).append((int(rec["population"]), float(rec["t_min_s"])))
    return {b: TimingTable(b, r) for b, r in rows.items()}


def load_timing_csv(path) -> dict[str, TimingTable]:
    with open(path, newline="") as fh:
        return parse_timing_csv(fh.read())


def reference_table() -> dict[str, TimingTable]:
    """Published minimum update intervals for five 2008-era systems."""
    text = resources.files("movingdb.data").joinpath("published_timings.csv").read_text()
    return parse_timing_csv(text)
