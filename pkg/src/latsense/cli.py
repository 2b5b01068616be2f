"""Command-line interface.

Every command reads a GOAL schedule or a timestamped trace, builds the
execution graph under a JSON cost-model config, and writes CSV or JSON.
Each output embeds the run manifest (``# key: value`` lines in CSV, a
``manifest`` object in JSON).

Exit codes: 0 success, 1 invalid input or infeasible query, 2 I/O error,
3 oracle cross-check failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .analysis import Analyzer, records_csv, sweep as sweep_records
from .costmodel import load_config
from .engine import build_lp, evaluate, export_lp, parse_lp, solve, solve_external, to_generic
from .engine.lp import Tolerance
from .errors import LatsenseError
from .frontend import (CollectiveAlgorithm, generate_workload, parse_goal, parse_trace,
                       schedule_from_trace, serialize_goal)
from .frontend.trace import TraceOp
from .graph import build_graph, validate
from .oracle import dp_breakpoints, simulate

log = logging.getLogger("latsense")

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_MISMATCH = 0, 1, 2, 3
CHECK_RTOL = 1e-9


class CheckFailed(Exception):
    """Oracle disagreement found by ``--check``."""


@dataclass
class RunManifest:
    command: str
    inputs: list[str]
    config: str | None
    overrides: list[str]
    output: str | None
    seed: int | None
    version: str = __version__
    config_sha256: str | None = None
    graph: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    timestamp: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["timestamp"] is None:
            del d["timestamp"]
        return d

    def csv_header(self) -> str:
        return "".join(f"# {k}: {json.dumps(v, sort_keys=True)}\n"
                       for k, v in self.to_dict().items())


# -- helpers ---------------------------------------------------------------------

def _read_program(path: str, fmt: str, collectives: list[str]):
    text = Path(path).read_text()
    if fmt == "auto":
        suffix = Path(path).suffix.lower()
        if suffix == ".goal":
            fmt = "goal"
        elif suffix in (".trace", ".tr"):
            fmt = "trace"
        else:
            first = next((ln.split("#")[0].split("//")[0].strip()
                          for ln in text.splitlines()
                          if ln.split("#")[0].split("//")[0].strip()), "")
            fmt = "goal" if first.startswith(("num_ranks", "rank")) else "trace"
    if fmt == "goal":
        return parse_goal(text)
    algorithms = {}
    for item in collectives:
        name, _, alg = item.partition("=")
        try:
            op = TraceOp[name.strip().upper()]
        except KeyError:
            raise LatsenseError(f"unknown collective {name!r}") from None
        algorithms[op] = CollectiveAlgorithm.parse(alg)
    return schedule_from_trace(parse_trace(text), algorithms=algorithms)


def _us(x: float) -> float:
    return x / 1e3


def _num(x: float):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _parse_list(text: str) -> list[float]:
    """``"0,0.2,0.4"`` or ``"start:stop:step"`` (inclusive stop)."""
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
            raise LatsenseError(f"bad range {text!r}; expected start:stop:step")
        start, stop, step = parts
        n = int(math.floor((stop - start) / step + 1e-9))
        return [start + i * step for i in range(n + 1)]
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise LatsenseError(f"bad number list {text!r}") from None


class Context:
    """Parsed inputs shared by the analysis commands."""

    def __init__(self, args, command: str):
        self.args = args
        self.model, self.cfg = load_config(args.config, args.set)
        program = _read_program(args.input, args.format, args.collective)
        self.graph = build_graph(program, self.model.eager_threshold)
        if args.dump_dot:
            Path(args.dump_dot).write_text(self.graph.to_dot())
        cfg_hash = hashlib.sha256(json.dumps(self.cfg, sort_keys=True).encode()).hexdigest()
        self.manifest = RunManifest(
            command=command, inputs=[args.input], config=args.config,
            overrides=list(args.set), output=args.out, seed=getattr(args, "seed", None),
            config_sha256=cfg_hash, graph=self.graph.stats(),
            timestamp=None if args.no_timestamp else
            _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))

    def check_point(self, bindings: dict, T: float, what: str) -> None:
        sim = simulate(self.graph, self.model, bindings).makespan
        ev = evaluate(self.graph, self.model, bindings)["makespan"]
        for name, ref in (("simulator", sim), ("evaluate", ev)):
            if abs(ref - T) > CHECK_RTOL * max(abs(T), 1.0):
                raise CheckFailed(f"{what}: LP gives {T!r} ns, {name} gives {ref!r} ns")


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _json_doc(manifest: RunManifest, body: dict) -> str:
    return json.dumps({"manifest": manifest.to_dict(), **body}, indent=2, sort_keys=True) + "\n"


# -- commands --------------------------------------------------------------------

def cmd_validate(args) -> int:
    try:
        model, _ = load_config(args.config, args.set)
        program = _read_program(args.input, args.format, args.collective)
        graph = build_graph(program, model.eager_threshold)
    except LatsenseError as exc:
        print(f"{args.input}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    diags = validate(graph)
    for d in diags:
        print(f"{args.input}: {d}", file=sys.stderr)
    if diags:
        return EXIT_INVALID
    stats = graph.stats()
    print(f"{args.input}: ok ({', '.join(f'{k}={v}' for k, v in stats.items())})")
    return EXIT_OK


def cmd_predict(args) -> int:
    ctx = Context(args, "predict")
    a = Analyzer(ctx.graph, ctx.model)
    rec = a.record()
    report = solve(a.lp)
    if args.check:
        ctx.check_point({}, rec.T, "predict")
    body = {
        "T_s": rec.T * 1e-9, "T_us": _us(rec.T), "lambda_L": rec.lambda_L,
        "lambda_G_bytes": rec.lambda_G, "rho_L": rec.rho_L, "rho_L_inverse": _num(rec.rho_L_inverse),
        "L_effective_us": _us(rec.L_effective), "latency_symbol": a.symbol,
        "feasibility_range_us": [_num(_us(x)) for x in rec.feasibility_range],
        "solve": report.to_dict(),
    }
    _emit(args, _json_doc(ctx.manifest, body))
    return EXIT_OK


def _check_records(ctx, a, records):
    for r in records:
        ctx.check_point({a.symbol: r.L}, r.T, f"L={r.L}")


def cmd_sweep(args) -> int:
    ctx = Context(args, "sweep")
    deltas = [d * 1e3 for d in _parse_list(args.delta_l)]
    a = Analyzer(ctx.graph, ctx.model)
    records = sweep_records(ctx.graph, ctx.model, deltas, jobs=args.jobs)
    if args.check:
        _check_records(ctx, a, records)
    ctx.manifest.extra = {"latency_symbol": a.symbol, "base_L_ns": a.base_L}
    _emit(args, records_csv(records, ctx.manifest.to_dict()))
    return EXIT_OK


def cmd_topology(args) -> int:
    ctx = Context(args, "topology")
    a = Analyzer(ctx.graph, ctx.model)
    values = _parse_list(args.wire_latency)
    start = min(values)
    a.lp = a.lp.with_bounds(**{a.symbol: start})
    records = a.sweep([v - start for v in values])
    if args.check:
        _check_records(ctx, a, records)
    ctx.manifest.extra = {"latency_symbol": a.symbol, "base_L_ns": start,
                          "topology": ctx.model.topology.kind.value if ctx.model.topology
                          else "none"}
    _emit(args, records_csv(records, ctx.manifest.to_dict()))
    return EXIT_OK


def cmd_tolerance(args) -> int:
    ctx = Context(args, "tolerance")
    a = Analyzer(ctx.graph, ctx.model)
    results = [a.tolerance(percent=p) for p in (args.percent or [])]
    if args.threshold_us is not None:
        results.append(a.tolerance(threshold=args.threshold_us * 1e3))
    if not results:
        raise LatsenseError("give --percent and/or --threshold-us")
    if args.check:
        for r in results:
            if math.isfinite(r.L_max):
                ctx.check_point({a.symbol: r.L_max}, r.threshold, f"tolerance {r.percent}")
    buf = io.StringIO()
    buf.write(ctx.manifest.csv_header())
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["percent", "baseline_T_s", "threshold_s", "L_max_us"])
    for r in results:
        w.writerow(["" if r.percent is None else f"{r.percent:g}", f"{r.baseline_T * 1e-9:.12g}",
                    f"{r.threshold * 1e-9:.12g}",
                    "inf" if math.isinf(r.L_max) else f"{_us(r.L_max):.12g}"])
    _emit(args, buf.getvalue())
    return EXIT_OK


def cmd_critical_latencies(args) -> int:
    ctx = Context(args, "critical-latencies")
    a = Analyzer(ctx.graph, ctx.model)
    res = a.critical_latencies(args.min * 1e3, args.max * 1e3, args.step * 1e3, args.eps * 1e3)
    if args.check:
        env = dp_breakpoints(ctx.graph, ctx.model, a.symbol)
        for x in res.values:
            if not any(abs(x - b) <= max(args.eps * 1e3, CHECK_RTOL * abs(b))
                       for b in env.breakpoints):
                raise CheckFailed(f"critical latency {x} ns is not a breakpoint of the DP envelope")
    ctx.manifest.extra = {"iterations": res.iterations, "latency_symbol": a.symbol}
    buf = io.StringIO()
    buf.write(ctx.manifest.csv_header())
    buf.write("L_c_us\n")
    for x in res.values:
        buf.write(f"{_us(x):.12g}\n")
    _emit(args, buf.getvalue())
    return EXIT_OK


def cmd_place(args) -> int:
    from .placement import (ArchitectureGraph, map_processes, mapping_csv,
                            read_mapping_csv)
    ctx = Context(args, "place")
    arch = ArchitectureGraph.load(args.arch)
    pi0 = read_mapping_csv(Path(args.pi0).read_text()) if args.pi0 else None
    res = map_processes(ctx.graph, arch, pi0, base=ctx.model, seed=args.seed,
                        candidates=args.candidates)
    ctx.manifest.inputs.append(args.arch)
    ctx.manifest.extra = {"T_before_s": res.T_initial * 1e-9, "T_after_s": res.T * 1e-9,
                          "initial_mapping": list(res.initial_mapping),
                          "accepted_swaps": [list(s) for s in res.accepted_swaps],
                          "iterations": res.iterations}
    _emit(args, ctx.manifest.csv_header() + mapping_csv(res.mapping))
    return EXIT_OK


def cmd_simulate(args) -> int:
    ctx = Context(args, "simulate")
    res = simulate(ctx.graph, ctx.model, strict_g=args.strict_g)
    if args.timeline:
        Path(args.timeline).write_text(res.timeline_csv(ctx.graph))
    if args.check and not args.strict_g:
        T = solve(build_lp(ctx.graph, ctx.model), ranging=()).objective
        if abs(T - res.makespan) > CHECK_RTOL * max(T, 1.0):
            raise CheckFailed(f"simulator {res.makespan!r} ns vs LP {T!r} ns")
    body = {"makespan_s": res.makespan * 1e-9, "makespan_us": _us(res.makespan),
            "events": res.events, "strict_g": args.strict_g}
    _emit(args, _json_doc(ctx.manifest, body))
    return EXIT_OK


def cmd_export_lp(args) -> int:
    ctx = Context(args, "export-lp")
    objective = None
    if args.max_runtime_us is not None:
        objective = Tolerance(args.max_runtime_us * 1e3)
    lp = build_lp(ctx.graph, ctx.model, objective)
    unit = {"ns": 1.0, "us": 1e3}[args.unit]
    comment = "\n".join(f"{k}: {json.dumps(v, sort_keys=True)}"
                        for k, v in ctx.manifest.to_dict().items())
    text = export_lp(lp, None, unit, comment)
    if to_generic(lp, unit) != parse_lp(text):
        raise CheckFailed("exported LP does not parse back to the same model")
    if args.check:
        status, obj = solve_external(parse_lp(text))
        mine = solve(lp, ranging=()).objective / unit
        if status != "optimal" and not (status == "unbounded" and math.isinf(mine)):
            raise CheckFailed(f"external solver status {status}")
        if math.isfinite(mine) and abs(obj - mine) > 1e-6 * max(abs(mine), 1.0):
            raise CheckFailed(f"external objective {obj!r} vs {mine!r}")
    _emit(args, text)
    return EXIT_OK


def cmd_gen(args) -> int:
    program = generate_workload(args.pattern, args.ranks, args.iterations, args.msg_size,
                                args.calc_ns, seed=args.seed, algorithm=args.algorithm,
                                num_events=args.events)
    manifest = RunManifest("gen", [], None, [], args.out, args.seed,
                           extra={"pattern": args.pattern, "ranks": args.ranks,
                                  "iterations": args.iterations, "msg_size": args.msg_size,
                                  "calc_ns": args.calc_ns, "algorithm": args.algorithm},
                           timestamp=None if args.no_timestamp else
                           _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
    _emit(args, manifest.csv_header() + serialize_goal(program))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latsense",
                                description="Network latency sensitivity analysis of "
                                            "message-passing programs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_input=True):
        if needs_input:
            sp.add_argument("input", help="GOAL schedule or timestamped trace")
            sp.add_argument("--format", choices=("auto", "goal", "trace"), default="auto")
            sp.add_argument("--collective", action="append", default=[],
                            metavar="OP=ALG",
                            help="collective expansion for traces, e.g. allreduce=ring")
            sp.add_argument("--config", help="JSON cost-model config")
            sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                            help="config override (repeatable)")
            sp.add_argument("--dump-dot", metavar="PATH", help="write the graph as DOT")
            sp.add_argument("--check", action="store_true",
                            help="cross-check against the oracle; exit 3 on mismatch")
        sp.add_argument("--out", "-o", help="output file (default stdout)")
        sp.add_argument("--no-timestamp", action="store_true",
                        help="omit the timestamp so reruns are byte-identical")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("validate", help="check a schedule or trace")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("predict", help="runtime and sensitivities at the configured latency")
    common(sp)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("sweep", help="analyse L = L_base + delta for a list of deltas")
    common(sp)
    sp.add_argument("--delta-l", required=True,
                    help="deltas in us: 'a,b,c' or 'start:stop:step'")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("tolerance", help="largest latency within x%% of the baseline")
    common(sp)
    sp.add_argument("--percent", type=float, nargs="+")
    sp.add_argument("--threshold-us", type=float, help="absolute runtime cap")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_tolerance)

    sp = sub.add_parser("critical-latencies", help="breakpoints of T(L) in an interval")
    common(sp)
    sp.add_argument("--min", type=float, required=True, help="us")
    sp.add_argument("--max", type=float, required=True, help="us")
    sp.add_argument("--step", type=float, default=1.0, help="us (default 1)")
    sp.add_argument("--eps", type=float, default=0.001, help="us (default 0.001)")
    sp.set_defaults(func=cmd_critical_latencies)

    sp = sub.add_parser("topology", help="sweep the wire latency of a topology model")
    common(sp)
    sp.add_argument("--wire-latency", required=True,
                    help="absolute values in ns: 'a,b,c' or 'start:stop:step'")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_topology)

    sp = sub.add_parser("place", help="optimise the rank-to-slot mapping")
    common(sp)
    sp.add_argument("--arch", required=True, help="architecture JSON")
    sp.add_argument("--pi0", help="initial mapping CSV (rank,slot); random if omitted")
    sp.add_argument("--candidates", type=int, default=4,
                    help="swaps tried per iteration before stopping (1 = plain heuristic)")
    sp.set_defaults(func=cmd_place)

    sp = sub.add_parser("simulate", help="discrete-event replay")
    common(sp)
    sp.add_argument("--timeline", help="write a per-vertex timeline CSV")
    sp.add_argument("--strict-g", action="store_true",
                    help="serialise network ops per rank by the gap g")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("export-lp", help="write the LP in CPLEX LP format")
    common(sp)
    sp.add_argument("--unit", choices=("ns", "us"), default="ns")
    sp.add_argument("--max-runtime-us", type=float,
                    help="export the tolerance LP (maximise latency, t <= cap)")
    sp.set_defaults(func=cmd_export_lp)

    sp = sub.add_parser("gen", help="generate a synthetic GOAL workload")
    sp.add_argument("pattern", choices=("halo2d", "allreduce_loop", "pipeline", "random_dag"))
    sp.add_argument("--ranks", "-P", type=int, required=True)
    sp.add_argument("--iterations", type=int, default=1)
    sp.add_argument("--msg-size", type=int, default=8)
    sp.add_argument("--calc-ns", type=int, default=1000)
    sp.add_argument("--events", type=int, help="random_dag event count")
    sp.add_argument("--algorithm", default="recursive_doubling",
                    help="allreduce algorithm for allreduce_loop")
    common(sp, needs_input=False)
    sp.set_defaults(func=cmd_gen)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except LatsenseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
