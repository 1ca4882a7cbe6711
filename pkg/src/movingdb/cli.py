"""Command-line front end.

    movingdb bench    --index delaunay|rtree|both --objects N [...] --out rounds.csv
    movingdb capacity --table t.csv --interval 1.0 [--backend CGAL]
    movingdb cluster  --servers 16 --levels 1 --script s.txt --trace trace.txt

``bench`` and ``cluster`` also read ``--config file.json``; a flag given on
the command line wins over the file, which wins over the built-in default.
Exit codes: 0 success, 1 failed assertion, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import ConfigError, MovingDbError
from . import workload as wl

BENCH_DEFAULTS = {
    "index": "delaunay",
    "objects": None,
    "rounds": 40,
    "workload": "uniform",
    "query": "knn:1",
    "seed": 0,
    "out": "rounds.csv",
    "alpha": 1.5,
    "min_step": 0.001,
    "hotspots": 8,
}

CLUSTER_DEFAULTS = {
    "servers": 16,
    "levels": 1,
    "script": None,
    "trace": None,
    "seed": 0,
    "latency": 1,
    "rho": 1.25,
    "baseline": None,
}


class UsageError(Exception):
    pass


def _merge(args: argparse.Namespace, defaults: dict) -> dict:
    """flag > config file > default."""
    conf = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                conf = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(conf, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(conf) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else conf.get(key, default)
    return out


def _parse_query(text: str):
    kind, _, arg = text.partition(":")
    try:
        if kind == "knn":
            return wl.Knn(int(arg or 1))
        if kind == "range":
            return wl.Range(float(arg or 0.01))
    except ValueError:
        pass
    raise UsageError(f"bad --query {text!r}; use knn:K or range:SIDE")


def _check_writable(path: str) -> None:
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise UsageError(f"output directory {parent} does not exist")


# -- bench --------------------------------------------------------------------


def cmd_bench(args) -> int:
    cfg = _merge(args, BENCH_DEFAULTS)
    if cfg["objects"] is None:
        raise UsageError("--objects is required")
    backends = {"delaunay": ["delaunay"], "rtree": ["rtree"], "both": ["delaunay", "rtree"]}
    if cfg["index"] not in backends:
        raise UsageError(f"--index must be delaunay, rtree or both, not {cfg['index']!r}")
    n, rounds = int(cfg["objects"]), int(cfg["rounds"])
    if n < 1 or rounds < 1 or n < rounds:
        raise UsageError("need objects >= rounds >= 1")
    if cfg["workload"] == "uniform":
        dist = wl.Uniform()
    elif cfg["workload"] == "levy":
        dist = wl.ParetoLevy(float(cfg["alpha"]), float(cfg["min_step"]), int(cfg["hotspots"]))
    else:
        raise UsageError(f"--workload must be uniform or levy, not {cfg['workload']!r}")
    spec = wl.WorkloadSpec.for_population(
        n, rounds=rounds, distribution=dist, query_kind=_parse_query(cfg["query"]),
        seed=int(cfg["seed"]),
    )
    out = cfg["out"]
    _check_writable(out)
    stem, _ = os.path.splitext(out)
    tmin_path = stem + "_tmin.csv"

    rounds_text = None
    tables = []
    for backend in backends[cfg["index"]]:
        stats = wl.run_benchmark(spec, backend)
        block = wl.rounds_csv(stats, backend)
        rounds_text = block if rounds_text is None else rounds_text + block.split("\n", 1)[1]
        tables.append(wl.TimingTable(backend, wl.min_update_interval(stats)))
    Path(out).write_text(rounds_text)
    Path(tmin_path).write_text(wl.timing_csv(tables))
    print(f"rounds: {out}")
    print(f"t_min: {tmin_path}")
    print("spec " + json.dumps(spec.describe(), sort_keys=True))
    print(f"trace-hash {wl.trace_hash(spec)}")
    return 0


# -- capacity -----------------------------------------------------------------


def cmd_capacity(args) -> int:
    if args.interval is None or args.interval <= 0:
        raise UsageError("--interval must be a positive number of seconds")
    try:
        if args.table in (None, "reference"):
            tables = wl.reference_table()
        else:
            tables = wl.load_timing_csv(args.table)
    except OSError as exc:
        raise UsageError(f"cannot read table: {exc}") from None
    names = [args.backend] if args.backend else list(tables)
    for name in names:
        if name not in tables:
            raise UsageError(f"no column {name!r} in table (have {', '.join(tables)})")
    for name in names:
        n, extrapolated = wl.capacity_detail(tables[name], args.interval)
        print(f"{name},{n}" + (",extrapolated" if extrapolated else ""))
    return 0


# -- cluster ------------------------------------------------------------------


def _parse_baseline(text: str):
    kind, _, dims = text.partition(":")
    if kind != "fixed-grid":
        raise UsageError(f"unknown baseline {text!r}; use fixed-grid:CxR")
    try:
        cols, rows = (int(v) for v in dims.lower().split("x"))
    except ValueError:
        raise UsageError(f"bad grid size {dims!r}; use CxR") from None
    if cols < 1 or rows < 1:
        raise UsageError("grid needs at least one column and one row")
    return cols, rows


def cmd_cluster(args) -> int:
    from .cluster import Cluster, ClusterSpec, parse_script, run_script, run_script_on_grid
    from .zones import GridPartition

    cfg = _merge(args, CLUSTER_DEFAULTS)
    if not cfg["script"]:
        raise UsageError("--script is required")
    try:
        text = Path(cfg["script"]).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read script: {exc}") from None
    commands = parse_script(text)
    spec = ClusterSpec(servers=int(cfg["servers"]), levels=int(cfg["levels"]),
                       latency=int(cfg["latency"]), rho=float(cfg["rho"]), seed=int(cfg["seed"]))
    spec.validate()
    grid_dims = _parse_baseline(cfg["baseline"]) if cfg["baseline"] else None
    if cfg["trace"]:
        _check_writable(cfg["trace"])

    lines: list[str] = []
    cluster = Cluster(spec, trace=lines.append)
    report = run_script(commands, cluster)
    if cfg["trace"]:
        Path(cfg["trace"]).write_text("".join(line + "\n" for line in lines))

    for v in report.verdicts:
        print(f"line {v.lineno}: {v.text} -> {'PASS' if v.ok else 'FAIL'} ({v.detail})")
    failed = [v for v in report.verdicts if not v.ok]
    print(f"assertions: {len(report.verdicts)} checked, {len(failed)} failed")
    if report.oracle_mismatches:
        print("oracle mismatches: " + ",".join(map(str, report.oracle_mismatches)))
    print(f"ticks: {cluster.tick}  messages: {cluster.net.delivered}")
    print(f"max-zone-load ratio sdsd: peak={report.peak_load_ratio:.3f} "
          f"final={report.final_load_ratio:.3f}")
    if grid_dims:
        grid = GridPartition(*grid_dims)
        base = run_script_on_grid(commands, grid)
        label = f"fixed-grid:{grid_dims[0]}x{grid_dims[1]}"
        print(f"max-zone-load ratio {label}: peak={base.peak_load_ratio:.3f} "
              f"final={base.final_load_ratio:.3f}")
        failed += [v for v in base.verdicts if not v.ok]
    if failed:
        first = min(failed, key=lambda v: v.lineno)
        print(f"first failure: line {first.lineno}: {first.text}")
        return 1
    return 0


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="movingdb", description="Moving-object database tools.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run the round-based index benchmark")
    b.add_argument("--config", help="JSON file with defaults for these flags")
    b.add_argument("--index", choices=["delaunay", "rtree", "both"])
    b.add_argument("--objects", type=int, help="final population N")
    b.add_argument("--rounds", type=int)
    b.add_argument("--workload", choices=["uniform", "levy"])
    b.add_argument("--query", help="knn:K or range:SIDE")
    b.add_argument("--seed", type=int)
    b.add_argument("--out", help="round statistics CSV; T_min goes to <stem>_tmin.csv")
    b.add_argument("--alpha", type=float, help="Pareto exponent for levy")
    b.add_argument("--min-step", dest="min_step", type=float)
    b.add_argument("--hotspots", type=int)
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("capacity", help="largest population for an update interval")
    c.add_argument("--table", help="timing CSV (backend,population,t_min_s); "
                   "'reference' or omitted uses the bundled published table")
    c.add_argument("--interval", type=float, required=True, help="seconds between updates")
    c.add_argument("--backend", help="one column only")
    c.set_defaults(func=cmd_capacity)

    k = sub.add_parser("cluster", help="run a scenario script on the simulated cluster")
    k.add_argument("--config", help="JSON file with defaults for these flags")
    k.add_argument("--servers", type=int)
    k.add_argument("--levels", type=int)
    k.add_argument("--script")
    k.add_argument("--trace", help="write one line per delivered message")
    k.add_argument("--seed", type=int)
    k.add_argument("--latency", type=int)
    k.add_argument("--rho", type=float)
    k.add_argument("--baseline", help="also replay on fixed-grid:CxR")
    k.set_defaults(func=cmd_cluster)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MovingDbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
