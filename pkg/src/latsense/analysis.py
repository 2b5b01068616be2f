"""Latency/bandwidth sensitivity, latency ratio, critical latencies,
latency tolerance and latency sweeps.

All times are in ns.  The functions take a graph and a cost model; the
:class:`Analyzer` class underneath builds the LP once and reuses it, which
matters for sweeps and repeated queries.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

from .costmodel import CostMode, CostModel
from .errors import ModelError
from .graph import ExecutionGraph
from .engine import build_lp, solve, tolerance_value
from .engine.lp import LpModel

DEFAULT_STEP = 1000.0   # 1 us
DEFAULT_EPS = 1.0       # 1 ns

CSV_HEADER = ("delta_l_us", "T_s", "lambda_l", "lambda_g_bytes", "rho_l", "fl_us", "fu_us")


@dataclass
class AnalysisRecord:
    """One analysed point; ``delta_L``, ``L``, ``T`` and the range are in ns."""

    delta_L: float
    L: float
    T: float
    lambda_L: float
    lambda_G: float
    rho_L: float
    rho_L_inverse: float
    feasibility_range: tuple[float, float]
    L_effective: float = 0.0
    reused_range: bool = False

    def csv_row(self) -> list[str]:
        fl, fu = self.feasibility_range
        return [_fmt(self.delta_L / 1e3), _fmt(self.T * 1e-9), _fmt(self.lambda_L),
                _fmt(self.lambda_G), _fmt(self.rho_L), _fmt(fl / 1e3), _fmt(fu / 1e3)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["feasibility_range"] = [_json(x) for x in self.feasibility_range]
        return {k: _json(v) if isinstance(v, float) else v for k, v in d.items()}


@dataclass
class ToleranceResult:
    percent: float | None
    baseline_T: float
    threshold: float
    L_max: float
    symbol: str

    def to_dict(self) -> dict:
        return {k: _json(v) if isinstance(v, float) else v for k, v in asdict(self).items()}


@dataclass
class CriticalLatencies:
    values: list[float]
    iterations: int
    regions: list[tuple[float, float, float]]   # (L, fl, lambda_L) per solve


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.12g}"


def _json(x: float):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def l_ratio(T: float, L_effective: float, lambda_L: float) -> float:
    """Fraction of the runtime ``T`` spent in network latency."""
    if lambda_L == 0 or T <= 0:
        return 0.0
    return min(max(L_effective * lambda_L / T, 0.0), 1.0)


class Analyzer:
    """Repeated analyses of one graph under one cost model."""

    def __init__(self, graph: ExecutionGraph, model: CostModel, symbol: str | None = None):
        self.graph = graph
        self.model = model
        self.lp: LpModel = build_lp(graph, model)
        self.symbol = symbol or model.latency_symbol
        if self.symbol is not None and self.symbol not in self.lp.lower_bounds:
            raise ModelError(f"unknown latency symbol {self.symbol!r}")

    @property
    def base_L(self) -> float:
        if self.symbol is None:
            raise ModelError("heterogeneous models have no single latency to vary")
        return self.lp.lower_bounds[self.symbol]

    def _lp_at(self, L: float | None, bindings: dict | None) -> LpModel:
        changes = dict(bindings or {})
        if L is not None:
            changes[self.symbol] = L
        return self.lp.with_bounds(**changes) if changes else self.lp

    def critical_messages(self, rc: dict[str, float]) -> float:
        """Number of latency charges on the critical path."""
        m = self.model
        if m.mode is CostMode.TOPOLOGY:
            if m.topology.wire_classes:
                return rc.get("l_tc", 0.0) / 2
            return rc.get("l_wire", 0.0) - rc.get("d_switch", 0.0)
        return sum(rc.get(s, 0.0) for s in m.latency_symbols)

    def record(self, L: float | None = None, bindings: dict | None = None,
               known_range: tuple[float, float] | None = None) -> AnalysisRecord:
        lp = self._lp_at(L, bindings)
        ranging = () if known_range is not None or self.symbol is None else [self.symbol]
        rep = solve(lp, ranging=ranging)
        rc = rep.reduced_costs
        values = lp.lower_bounds
        if self.symbol is not None:
            lam = rc[self.symbol]
            rng = known_range if known_range is not None else rep.feasibility_ranges[self.symbol]
            cur = values[self.symbol]
        else:
            lam = sum(rc[s] for s in self.model.latency_symbols)
            rng = (-math.inf, math.inf)
            cur = 0.0
        lam_g = sum(rc.get(s, 0.0) for s in self.model.bandwidth_symbols)
        latency_time = sum(values[s] * rc.get(s, 0.0) for s in self.model.latency_symbols)
        msgs = self.critical_messages(rc)
        l_eff = latency_time / msgs if msgs > 0 else 0.0
        T = rep.objective
        rho = l_ratio(T, l_eff, msgs)
        rho_inv = T / latency_time if latency_time > 0 else math.inf
        base = self.base_L if self.symbol is not None else 0.0
        return AnalysisRecord(cur - base, cur, T, lam, lam_g, rho, rho_inv, tuple(rng),
                              l_eff, known_range is not None)

    def sweep(self, deltas, reuse: bool = True) -> list[AnalysisRecord]:
        base = self.base_L
        out = []
        known: list[tuple[float, float, float]] = []
        for d in deltas:
            if d < 0:
                raise ModelError(f"negative delta {d}")
            L = base + d
            hit = None
            if reuse:
                for fl, fu, _ in known:
                    if fl <= L < fu:
                        hit = (fl, fu)
                        break
            rec = self.record(L, known_range=hit)
            if hit is None:
                fl, fu = rec.feasibility_range
                known.append((fl, fu, rec.lambda_L))
            out.append(rec)
        return out

    def critical_latencies(self, L_min: float, L_max: float, step: float = DEFAULT_STEP,
                           eps: float = DEFAULT_EPS) -> CriticalLatencies:
        """Breakpoints of T(L) found by walking feasibility ranges downwards
        from ``L_max``; each solve reveals where its critical path stops
        being optimal, and the walk continues at
        ``min(L - step, fl - eps)``.  ``step`` is the resolution: regions
        shorter than it can be stepped over."""
        if not L_min <= L_max:
            raise ModelError(f"empty interval [{L_min}, {L_max}]")
        if step <= 0 or eps <= 0:
            raise ModelError("step and eps must be positive")
        if self.symbol is None:
            raise ModelError("critical latencies need a single latency symbol")
        found: list[float] = []
        regions = []
        lam = None
        L = L_max
        iterations = 0
        while True:
            iterations += 1
            lp = self._lp_at(L, None)
            rep = solve(lp, ranging=[self.symbol])
            fl = rep.feasibility_ranges[self.symbol][0]
            lam_new = rep.reduced_costs[self.symbol]
            regions.append((L, fl, lam_new))
            if lam != lam_new:
                found.append(fl)
                lam = lam_new
            if fl < L_min:
                break
            L = min(L - step, fl - eps)
        values = []
        for x in sorted(v for v in found if L_min <= v <= L_max):
            if not values or x - values[-1] > eps:
                values.append(x)
        return CriticalLatencies(values, iterations, regions)

    def tolerance(self, percent: float | None = None, threshold: float | None = None,
                  bindings: dict | None = None) -> ToleranceResult:
        """Largest latency keeping T within ``(1 + percent/100) * T_base``
        (or below an absolute ``threshold`` in ns)."""
        if (percent is None) == (threshold is None):
            raise ModelError("give exactly one of percent and threshold")
        if percent is not None and percent <= 0:
            raise ModelError("percent must be positive")
        if self.symbol is None:
            raise ModelError("latency tolerance needs a single latency symbol")
        lp = self._lp_at(None, bindings)
        base = solve(lp, ranging=()).objective
        if threshold is None:
            threshold = (1 + percent / 100) * base
        L_max = tolerance_value(lp, self.symbol, threshold)
        return ToleranceResult(percent, base, threshold, L_max, self.symbol)


def latency_sensitivity(graph, model, bindings=None) -> float:
    a = Analyzer(graph, model)
    return a.record(bindings=bindings).lambda_L


def bandwidth_sensitivity(graph, model, bindings=None) -> float:
    a = Analyzer(graph, model)
    return a.record(bindings=bindings).lambda_G


def analyse(graph, model, bindings=None) -> AnalysisRecord:
    return Analyzer(graph, model).record(bindings=bindings)


def critical_latencies(graph, model, L_min, L_max, step=DEFAULT_STEP,
                       eps=DEFAULT_EPS) -> CriticalLatencies:
    return Analyzer(graph, model).critical_latencies(L_min, L_max, step, eps)


def latency_tolerance(graph, model, percent=None, threshold=None) -> ToleranceResult:
    return Analyzer(graph, model).tolerance(percent, threshold)


def _sweep_chunk(args):
    graph, model, symbol, deltas = args
    return Analyzer(graph, model, symbol).sweep(deltas)


def sweep(graph, model, deltas, jobs: int = 1, symbol: str | None = None) -> list[AnalysisRecord]:
    """Analyse ``L := L_base + delta`` for each delta, in input order.

    With ``jobs > 1`` contiguous chunks of the delta list run in separate
    processes.  Each chunk reuses ranges only among its own points, so
    ``reused_range`` flags and the last bits of range ends can differ from a
    sequential run; every other field is identical.
    """
    deltas = list(deltas)
    if jobs <= 1 or len(deltas) < 2 * jobs:
        return Analyzer(graph, model, symbol).sweep(deltas)
    size = math.ceil(len(deltas) / jobs)
    chunks = [deltas[i:i + size] for i in range(0, len(deltas), size)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = pool.map(_sweep_chunk, [(graph, model, symbol, c) for c in chunks])
        return [r for part in parts for r in part]


def records_csv(records: list[AnalysisRecord], metadata: dict | None = None) -> str:
    """CSV with one ``# key: value`` comment line per metadata entry."""
    buf = io.StringIO()
    for k, v in (metadata or {}).items():
        buf.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.csv_row())
    return buf.getvalue()


def records_json(records: list[AnalysisRecord], metadata: dict | None = None) -> str:
    return json.dumps({"metadata": metadata or {},
                       "records": [r.to_dict() for r in records]}, indent=2, sort_keys=True)
