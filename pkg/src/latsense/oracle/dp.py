"""Exact makespan as a function of one symbol, by path enumeration with DP.

Each vertex stores the Pareto set of ``(a, C)`` pairs describing the paths
that end at it: ``a`` is the path's coefficient of the chosen symbol and
``C`` its cost with every other symbol bound.  The makespan is the upper
envelope ``T(x) = max_i (a_i x + C_i)`` over the sinks' pairs.  Pruning
drops pairs beaten for every ``x >= 0``, so the envelope is exact there only.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

from ..costmodel import CostExpr, CostModel
from ..errors import ModelError
from ..graph import ExecutionGraph

MAX_VERTICES = 50_000


@dataclass(frozen=True)
class PiecewiseLinear:
    """Convex upper envelope of lines; ``lines`` have strictly increasing slopes
    and ``breakpoints[i]`` is where ``lines[i+1]`` takes over from ``lines[i]``."""

    lines: tuple[tuple[float, float], ...]
    breakpoints: tuple[float, ...]

    @classmethod
    def envelope(cls, pairs) -> "PiecewiseLinear":
        best: dict[float, float] = {}
        for a, c in pairs:
            if c > best.get(a, -math.inf):
                best[a] = c
        hull: list[tuple[float, float]] = []
        for a, c in sorted(best.items()):
            while hull:
                a1, c1 = hull[-1]
                if c >= c1:     # larger slope and no lower intercept dominates
                    hull.pop()
                    continue
                if len(hull) >= 2:
                    a0, c0 = hull[-2]
                    # hull[-1] is useless if the new line overtakes hull[-2]
                    # no later than hull[-1] does
                    if (c0 - c) * (a1 - a0) <= (c0 - c1) * (a - a0):
                        hull.pop()
                        continue
                break
            hull.append((a, c))
        bps = tuple((c0 - c1) / (a1 - a0) for (a0, c0), (a1, c1) in zip(hull, hull[1:]))
        return cls(tuple(hull), bps)

    def _piece(self, x: float) -> int:
        # right-continuous choice: at a breakpoint take the steeper line
        return bisect.bisect_right(self.breakpoints, x)

    def __call__(self, x: float) -> float:
        if not self.lines:
            return 0.0
        a, c = self.lines[self._piece(x)]
        return a * x + c

    def slope(self, x: float) -> float:
        """Right-derivative at ``x``."""
        if not self.lines:
            return 0.0
        return self.lines[self._piece(x)][0]

    def breakpoints_in(self, lo: float, hi: float) -> list[float]:
        return [b for b in self.breakpoints if lo <= b <= hi]


def _split(expr: CostExpr, symbol: str, bindings: dict[str, float]) -> tuple[float, float]:
    a = expr.coef(symbol)
    rest = CostExpr(expr.const, {k: v for k, v in expr.coefs.items() if k != symbol})
    return a, rest.value(bindings)


def _prune(pairs: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Drop pairs dominated by another with ``a' >= a`` and ``C' >= C``."""
    out = []
    best_c = -math.inf
    for a, c in sorted(pairs, key=lambda p: (-p[0], -p[1])):
        if c > best_c:
            out.append((a, c))
            best_c = c
    out.reverse()
    return out


def dp_breakpoints(graph: ExecutionGraph, model: CostModel, symbol: str | None = None,
                   bindings: dict[str, float] | None = None,
                   max_vertices: int = MAX_VERTICES) -> PiecewiseLinear:
    """Makespan envelope as a function of ``symbol`` (default: primary latency).

    Raises:
        ModelError: the graph exceeds ``max_vertices`` or the symbol is unknown.
    """
    if len(graph.vertices) > max_vertices:
        raise ModelError(f"graph has {len(graph.vertices)} vertices; the DP oracle is "
                         f"limited to {max_vertices}")
    b = model.bindings()
    if bindings:
        b.update(bindings)
    symbol = symbol or model.latency_symbol
    if symbol not in b:
        raise ModelError(f"unknown symbol {symbol!r}")
    sets: list[list[tuple[float, float]] | None] = [None] * len(graph.vertices)
    for vid in graph.topo_order:
        v = graph.vertices[vid]
        cand: list[tuple[float, float]] = []
        for u, e in graph.preds[vid]:
            ea, ec = _split(model.edge_cost(graph, e), symbol, b)
            cand.extend((a + ea, c + ec) for a, c in sets[u])
        rel = model.release(graph, v)
        if rel is not None:
            cand.append(_split(rel, symbol, b))
        if not cand:
            cand = [(0.0, 0.0)]
        va, vc = _split(model.vertex_cost(v), symbol, b)
        sets[vid] = _prune([(a + va, c + vc) for a, c in cand])
    pairs = [p for s in graph.sinks for p in sets[s]]
    return PiecewiseLinear.envelope(pairs)
