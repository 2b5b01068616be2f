"""Linear-program construction from an execution graph.

The graph is walked once in topological order.  A vertex with a single
incoming term folds its cost into its predecessor's completion expression; a
vertex with several gets a fresh variable ``y<id>`` and one ``y >= term``
constraint per incoming term.  The makespan variable ``t`` is bounded below
by the completion of every sink.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..costmodel import CostExpr, CostModel
from ..errors import ModelError
from ..graph import ExecutionGraph


class Affine:
    """``var + const + sum(coef * symbol)`` where ``var`` is a y/t index or -1."""

    __slots__ = ("var", "const", "coefs")

    def __init__(self, var: int = -1, const: float = 0.0, coefs: dict | None = None):
        self.var = var
        self.const = const
        self.coefs = coefs or {}

    def plus(self, e: CostExpr) -> "Affine":
        if not e.coefs:
            return Affine(self.var, self.const + e.const, self.coefs)
        coefs = dict(self.coefs)
        for k, v in e.coefs.items():
            coefs[k] = coefs.get(k, 0.0) + v
        return Affine(self.var, self.const + e.const, coefs)

    def __repr__(self):
        return f"Affine(var={self.var}, const={self.const}, coefs={self.coefs})"


@dataclass(frozen=True)
class Constraint:
    """``lhs >= rhs``; ``lhs`` indexes ``LpModel.variables``."""

    id: int
    lhs: int
    rhs: Affine


@dataclass(frozen=True)
class Minimize:
    """Predict runtime: minimise the makespan variable ``t``."""


@dataclass(frozen=True)
class Tolerance:
    """Maximise ``symbol`` subject to ``t <= threshold`` (ns)."""

    threshold: float
    symbol: str | None = None


@dataclass
class LpModel:
    """Constraint system plus symbol lower bounds.

    ``variables`` lists the y variables in creation order followed by ``t``;
    symbols are separate decision variables named in ``symbols``.
    Constraints of one variable are contiguous and appear in variable order.
    """

    variables: list[str]
    symbols: list[str]
    constraints: list[Constraint]
    lower_bounds: dict[str, float]
    objective: Minimize | Tolerance = field(default_factory=Minimize)
    latency_symbols: tuple[str, ...] = ()
    bandwidth_symbols: tuple[str, ...] = ()
    primary_symbol: str | None = None
    vertex_var: dict[int, int] = field(default_factory=dict)
    # compiled form shared by every copy made with with_bounds/with_objective
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def t_index(self) -> int:
        return len(self.variables) - 1

    @property
    def num_variables(self) -> int:
        return len(self.variables) + len(self.symbols)

    def with_bounds(self, **changes: float) -> "LpModel":
        lb = dict(self.lower_bounds)
        for k, v in changes.items():
            if k not in lb:
                raise ModelError(f"unknown symbol {k!r}")
            lb[k] = v
        return LpModel(self.variables, self.symbols, self.constraints, lb, self.objective,
                       self.latency_symbols, self.bandwidth_symbols, self.primary_symbol,
                       self.vertex_var, self.cache)

    def with_objective(self, objective) -> "LpModel":
        return LpModel(self.variables, self.symbols, self.constraints,
                       dict(self.lower_bounds), objective, self.latency_symbols,
                       self.bandwidth_symbols, self.primary_symbol, self.vertex_var,
                       self.cache)

    def describe(self, c: Constraint, unit: float = 1.0) -> str:
        """Human-readable form, e.g. ``y4 >= l + 115``; ``unit`` rescales constants."""
        terms = []
        if c.rhs.var >= 0:
            terms.append(self.variables[c.rhs.var])
        for s, k in sorted(c.rhs.coefs.items()):
            terms.append(s if k == 1 else f"{k:g}*{s}")
        if c.rhs.const or not terms:
            terms.append(f"{c.rhs.const / unit:g}")
        return f"{self.variables[c.lhs]} >= " + " + ".join(terms)


def build_lp(graph: ExecutionGraph, model: CostModel,
             objective: Minimize | Tolerance | None = None) -> LpModel:
    objective = objective or Minimize()
    model.check_ranks(graph.num_ranks)
    bindings = model.bindings()
    if isinstance(objective, Tolerance):
        sym = objective.symbol or model.latency_symbol
        if sym not in bindings:
            raise ModelError(f"tolerance symbol {sym!r} is not a decision symbol")
        objective = Tolerance(float(objective.threshold), sym)
    elif not isinstance(objective, Minimize):
        raise ModelError(f"unknown objective {objective!r}")

    variables: list[str] = []
    constraints: list[Constraint] = []
    vertex_var: dict[int, int] = {}
    done: list[Affine | None] = [None] * len(graph.vertices)
    for vid in graph.topo_order:
        v = graph.vertices[vid]
        terms = []
        for u, e in graph.preds[vid]:
            if model.dominated_edge(graph, e):
                continue
            terms.append(done[u].plus(model.edge_cost(graph, e)))
        rel = model.release(graph, v)
        if rel is not None:
            terms.append(Affine().plus(rel))
        if not terms:
            start = Affine()
        elif len(terms) == 1:
            start = terms[0]
        else:
            y = len(variables)
            variables.append(f"y{vid}")
            vertex_var[vid] = y
            for term in terms:
                constraints.append(Constraint(len(constraints) + 1, y, term))
            start = Affine(y)
        done[vid] = start.plus(model.vertex_cost(v))
    t = len(variables)
    variables.append("t")
    for s in graph.sinks:
        constraints.append(Constraint(len(constraints) + 1, t, done[s]))
    symbols = list(bindings)
    return LpModel(variables, symbols, constraints, dict(bindings), objective,
                   model.latency_symbols, model.bandwidth_symbols, model.latency_symbol,
                   vertex_var)
