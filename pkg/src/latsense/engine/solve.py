"""Parametric solver for the longest-path LPs produced by :func:`build_lp`.

Every generated LP is the epigraph of a max-plus recurrence over a DAG, so
the optimum is found by one forward pass over the constraints.  Reduced
costs are right-derivatives of the optimal makespan with respect to each
symbol's lower bound, and the range of feasibility of a symbol is the
interval of its lower bound over which that derivative stays constant.
Both are computed exactly: the makespan is a convex piecewise-linear
function of each symbol, so its breakpoints can be located by intersecting
tangent lines.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from ..costmodel import CostModel
from ..errors import InfeasibleError, ModelError
from ..graph import ExecutionGraph
from .lp import LpModel, Minimize, Tolerance

TIE_RTOL = 1e-12
RANGE_RTOL = 1e-9
_MAX_STEPS = 10_000


class _Compiled:
    """Flat arrays for fast repeated passes over one constraint system."""

    def __init__(self, model: LpModel):
        self.nvars = len(model.variables)
        self.symbols = list(model.symbols)
        self.sym_index = {s: i for i, s in enumerate(self.symbols)}
        # groups[v] = list of (rhs_var, const, ((sym_idx, coef), ...)) for var v
        groups: list[list] = [[] for _ in range(self.nvars)]
        for c in model.constraints:
            terms = tuple((self.sym_index[s], k) for s, k in c.rhs.coefs.items() if k)
            groups[c.lhs].append((c.rhs.var, c.rhs.const, terms))
        self.groups = groups

    def values(self, x: list[float]) -> list[float]:
        val = [0.0] * self.nvars
        for v, group in enumerate(self.groups):
            best = -math.inf
            for rv, const, terms in group:
                r = const + (val[rv] if rv >= 0 else 0.0)
                for s, k in terms:
                    r += k * x[s]
                if r > best:
                    best = r
            val[v] = best if group else 0.0
        return val

    def slope(self, x: list[float], sym: int) -> tuple[float, float]:
        """Makespan and its right-derivative with respect to one symbol."""
        val = [0.0] * self.nvars
        der = [0.0] * self.nvars
        for v, group in enumerate(self.groups):
            if not group:
                continue
            cands = []
            for rv, const, terms in group:
                r = const
                d = 0.0
                if rv >= 0:
                    r += val[rv]
                    d = der[rv]
                for s, k in terms:
                    r += k * x[s]
                    if s == sym:
                        d += k
                cands.append((r, d))
            best = max(r for r, _ in cands)
            tol = TIE_RTOL * max(1.0, abs(best))
            val[v] = best
            der[v] = max(d for r, d in cands if r >= best - tol)
        return val[-1], der[-1]

    def derivatives(self, x: list[float]) -> tuple[list[float], dict[int, float], list[list[bool]]]:
        """Values, right-derivatives of ``t`` for all symbols, tight flags."""
        val = [0.0] * self.nvars
        der: list[dict[int, float]] = [{} for _ in range(self.nvars)]
        tight: list[list[bool]] = []
        for v, group in enumerate(self.groups):
            if not group:
                tight.append([])
                continue
            rs = []
            for rv, const, terms in group:
                r = const + (val[rv] if rv >= 0 else 0.0)
                for s, k in terms:
                    r += k * x[s]
                rs.append(r)
            best = max(rs)
            tol = TIE_RTOL * max(1.0, abs(best))
            flags = [r >= best - tol for r in rs]
            d: dict[int, float] = {}
            for (rv, _, terms), on in zip(group, flags):
                if not on:
                    continue
                cand = dict(der[rv]) if rv >= 0 else {}
                for s, k in terms:
                    cand[s] = cand.get(s, 0.0) + k
                keys = set(cand) | set(d)
                d = {s: max(cand.get(s, 0.0), d.get(s, 0.0)) for s in keys}
            val[v] = best
            der[v] = d
            tight.append(flags)
        return val, der[-1] if self.nvars else {}, tight

    def extreme_slope(self, sym: int, pick) -> float:
        """Asymptotic slope of ``t`` in one symbol (``pick=max`` for +inf)."""
        acc = [0.0] * self.nvars
        for v, group in enumerate(self.groups):
            if not group:
                continue
            acc[v] = pick((acc[rv] if rv >= 0 else 0.0)
                          + sum(k for s, k in terms if s == sym)
                          for rv, _, terms in group)
        return acc[-1]


def compiled(model: LpModel) -> _Compiled:
    c = model.cache.get("compiled")
    if c is None:
        c = model.cache["compiled"] = _Compiled(model)
    return c


@dataclass
class SolveReport:
    """Result of :func:`solve`.  Times are in ns.

    In Tolerance mode ``objective`` is the largest admissible value of the
    tolerance symbol (``inf`` when the runtime cap is never reached).
    """

    objective: float
    var_values: dict[str, float]
    reduced_costs: dict[str, float]
    feasibility_ranges: dict[str, tuple[float, float]]
    tight_constraints: list[int]
    status: str = "optimal"
    makespan: float = 0.0
    extras: dict = field(default_factory=dict)

    def to_dict(self, time_unit: float = 1e-9) -> dict:
        """JSON-ready dict; times are converted from ns with ``time_unit``."""
        def t(x):
            return _json_num(x * time_unit)
        return {
            "status": self.status,
            "objective_s": t(self.objective),
            "makespan_s": t(self.makespan),
            "var_values": {k: _json_num(v) for k, v in self.var_values.items()},
            "reduced_costs": {k: _json_num(v) for k, v in self.reduced_costs.items()},
            "feasibility_ranges": {k: [t(a), t(b)]
                                   for k, (a, b) in self.feasibility_ranges.items()},
            "tight_constraints": list(self.tight_constraints),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _json_num(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _point(model: LpModel, comp: _Compiled) -> list[float]:
    try:
        return [float(model.lower_bounds[s]) for s in comp.symbols]
    except KeyError as exc:
        raise ModelError(f"symbol {exc.args[0]!r} has no lower bound") from None


def makespan(model: LpModel, bindings: dict[str, float] | None = None) -> float:
    """Optimal ``t`` with every symbol at its lower bound (or ``bindings``)."""
    comp = compiled(model)
    x = _point(model, comp)
    for k, v in (bindings or {}).items():
        x[comp.sym_index[k]] = v
    return comp.values(x)[-1] if comp.nvars else 0.0


def _f(comp, x, sym, value):
    y = list(x)
    y[sym] = value
    return comp.slope(y, sym)


def feasibility_range(model: LpModel, symbol: str,
                      point: tuple[float, float] | None = None) -> tuple[float, float]:
    """Maximal interval around the lower bound of ``symbol`` on which the
    right-derivative of the makespan is constant.

    ``point`` optionally passes the already known (makespan, slope) at the
    current lower bound.
    """
    comp = compiled(model)
    x = _point(model, comp)
    k = comp.sym_index[symbol]
    x0 = x[k]
    f0, s0 = point if point is not None else comp.slope(x, k)
    smax = comp.extreme_slope(k, max)
    smin = comp.extreme_slope(k, min)
    hi = math.inf if s0 >= smax else _breakpoint(comp, x, k, x0, f0, s0, +1)
    lo = -math.inf if s0 <= smin else _breakpoint(comp, x, k, x0, f0, s0, -1)
    return lo, hi


def _breakpoint(comp, x, k, x0, f0, s0, direction) -> float:
    """End of the linear piece through ``(x0, f0)`` with slope ``s0``."""
    delta = max(abs(x0), 1.0)
    for _ in range(_MAX_STEPS):
        x1 = x0 + direction * delta
        f1, s1 = _f(comp, x, k, x1)
        if s1 != s0:
            break
        delta *= 2
    else:
        raise ModelError("range search did not terminate")
    for _ in range(_MAX_STEPS):
        # intersection of the current piece's line with the tangent at x1
        xs = (f0 - f1 - s0 * x0 + s1 * x1) / (s1 - s0)
        fs, ss = _f(comp, x, k, xs)
        line = f0 + s0 * (xs - x0)
        if fs - line <= RANGE_RTOL * max(1.0, abs(fs)):
            return xs
        x1, f1, s1 = xs, fs, ss
        if s1 == s0:
            # only reachable through rounding; the piece ends at xs
            return xs
    raise ModelError("range search did not terminate")


def tolerance_value(model: LpModel, symbol: str, threshold: float) -> float:
    """Largest value of ``symbol`` (not below its lower bound) whose makespan
    stays within ``threshold``; ``inf`` if the makespan never reaches it."""
    comp = compiled(model)
    x = _point(model, comp)
    k = comp.sym_index[symbol]
    lb = x[k]
    f, s = _f(comp, x, k, lb)
    tol = RANGE_RTOL * max(1.0, abs(threshold))
    if f > threshold + tol:
        raise InfeasibleError(f"runtime {f:g} ns at the lower bound already exceeds "
                              f"the cap {threshold:g} ns")
    if comp.extreme_slope(k, max) <= 0:
        return math.inf
    delta = max(abs(lb), 1.0)
    xr = lb
    while f < threshold:
        xr = lb + delta
        f, s = _f(comp, x, k, xr)
        delta *= 2
        if delta > 1e300:
            return math.inf
    # Newton from the right: tangents of a convex function never overshoot
    for _ in range(_MAX_STEPS):
        if f - threshold <= tol * 1e-3 or s <= 0:
            return max(xr, lb)
        nxt = xr - (f - threshold) / s
        if nxt >= xr:
            return max(xr, lb)
        xr = nxt
        f, s = _f(comp, x, k, xr)
    raise ModelError("tolerance search did not terminate")


def solve(model: LpModel, ranging: list[str] | tuple[str, ...] | None = None) -> SolveReport:
    """Solve the LP.

    Args:
        model: LP from :func:`build_lp`.
        ranging: symbols whose feasibility range is computed; defaults to the
            primary latency and bandwidth symbols.  Pass ``()`` to skip.

    Returns:
        A SolveReport.  In Tolerance mode the report describes the capped
        model at the optimal tolerance value.

    Raises:
        InfeasibleError: Tolerance cap below the runtime at the lower bounds.
    """
    comp = compiled(model)
    x = _point(model, comp)
    if isinstance(model.objective, Tolerance):
        obj = model.objective
        best = tolerance_value(model, obj.symbol, obj.threshold)
        report = solve(model.with_objective(Minimize()), ranging=())
        report.status = "unbounded" if math.isinf(best) else "optimal"
        report.objective = best
        report.var_values[obj.symbol] = best
        report.var_values["t"] = obj.threshold if math.isfinite(best) else report.makespan
        report.extras["threshold"] = obj.threshold
        return report

    if comp.nvars == 0:
        return SolveReport(0.0, {}, {}, {}, [])
    val, der, tight = comp.derivatives(x)
    T = val[-1]
    if not math.isfinite(T):
        raise ModelError("objective is not finite")
    reduced = {s: der.get(i, 0.0) for i, s in enumerate(comp.symbols)}
    if ranging is None:
        ranging = [s for s in (model.primary_symbol, "g_bw") if s in comp.sym_index]
    ranges = {}
    for s in ranging:
        ranges[s] = feasibility_range(model, s, (T, reduced[s]))
    tight_ids = []
    n = 0
    for flags in tight:
        for on in flags:
            n += 1
            if on:
                tight_ids.append(n)
    values = dict(zip(comp.symbols, x))
    values["t"] = T
    return SolveReport(T, values, reduced, ranges, tight_ids, "optimal", T)


def evaluate(graph: ExecutionGraph, model: CostModel,
             bindings: dict[str, float] | None = None) -> dict:
    """Direct longest-path pass over the graph (no LP).

    Returns ``{"start": [...], "end": [...], "makespan": T}`` in ns.  Symbols
    missing from ``bindings`` take the model's parameter values.
    """
    b = model.bindings()
    if bindings:
        unknown = set(bindings) - set(b)
        if unknown:
            raise ModelError(f"unknown symbols {sorted(unknown)}")
        b.update(bindings)
    model.check_ranks(graph.num_ranks)
    n = len(graph.vertices)
    start = [0.0] * n
    end = [0.0] * n
    for vid in graph.topo_order:
        v = graph.vertices[vid]
        cands = [end[u] + model.edge_cost(graph, e).value(b) for u, e in graph.preds[vid]]
        rel = model.release(graph, v)
        if rel is not None:
            cands.append(rel.value(b))
        start[vid] = max(cands) if cands else 0.0
        end[vid] = start[vid] + model.vertex_cost(v).value(b)
    T = max((end[s] for s in graph.sinks), default=0.0)
    return {"start": start, "end": end, "makespan": T}
