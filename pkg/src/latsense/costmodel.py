"""LogGPS cost assignment for execution-graph vertices and edges.

All times are nanoseconds and inverse bandwidths are ns per byte.  Network
costs are affine expressions over decision symbols:

* uniform mode: ``l`` and ``g_bw``
* topology mode: ``l_wire`` (or ``l_tc``/``l_intra``/``l_inter`` for a
  Dragonfly with per-class wires), ``d_switch`` and ``g_bw``
* heterogeneous mode: ``l_i_j`` and ``g_i_j`` for every rank pair ``i < j``
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ModelError
from .graph import Edge, EdgeKind, ExecutionGraph, Vertex, VertexKind


class CostExpr:
    """``const + sum(coef * symbol)`` with nonnegative coefficients."""

    __slots__ = ("const", "coefs")

    def __init__(self, const: float = 0.0, coefs: dict[str, float] | None = None):
        self.const = float(const)
        self.coefs = {k: float(v) for k, v in (coefs or {}).items() if v}

    def __add__(self, other: "CostExpr") -> "CostExpr":
        coefs = dict(self.coefs)
        for k, v in other.coefs.items():
            coefs[k] = coefs.get(k, 0.0) + v
        return CostExpr(self.const + other.const, coefs)

    def scaled(self, factor: float) -> "CostExpr":
        return CostExpr(self.const * factor, {k: v * factor for k, v in self.coefs.items()})

    def coef(self, symbol: str) -> float:
        return self.coefs.get(symbol, 0.0)

    def value(self, bindings: dict[str, float]) -> float:
        try:
            return self.const + sum(c * bindings[s] for s, c in self.coefs.items())
        except KeyError as exc:
            raise ModelError(f"symbol {exc.args[0]!r} is not bound") from None

    @property
    def is_zero(self) -> bool:
        return not self.const and not self.coefs

    def __eq__(self, other):
        return (isinstance(other, CostExpr) and self.const == other.const
                and self.coefs == other.coefs)

    def __repr__(self):
        terms = [f"{c:g}*{s}" for s, c in sorted(self.coefs.items())]
        if self.const or not terms:
            terms.append(f"{self.const:g}")
        return "CostExpr(" + " + ".join(terms) + ")"


ZERO = CostExpr()


@dataclass(frozen=True)
class LogGPSParams:
    L: float = 0.0
    o: float = 0.0
    G: float = 0.0
    g: float = 0.0
    P: int = 1
    S: int | None = None  # bytes; None disables rendezvous

    def __post_init__(self):
        for name in ("L", "o", "G", "g"):
            if getattr(self, name) < 0:
                raise ModelError(f"LogGPS parameter {name} must be >= 0")
        if self.P < 1:
            raise ModelError("P must be >= 1")
        if self.S is not None and self.S < 0:
            raise ModelError("S must be >= 0")


class TopologyKind(enum.Enum):
    FLAT = "flat"
    FAT_TREE = "fat_tree"
    DRAGONFLY = "dragonfly"


@dataclass(frozen=True)
class TopologySpec:
    kind: TopologyKind = TopologyKind.FLAT
    k: int = 0                    # fat-tree switch radix
    groups: int = 0               # dragonfly g
    routers: int = 0              # dragonfly a (routers per group)
    nodes_per_router: int = 0     # dragonfly p
    l_wire: float = 0.0
    d_switch: float = 0.0
    wire_classes: dict[str, float] | None = None  # {"l_tc":..., "l_intra":..., "l_inter":...}

    def __post_init__(self):
        if self.l_wire < 0 or self.d_switch < 0:
            raise ModelError("l_wire and d_switch must be >= 0")
        if self.kind is TopologyKind.FAT_TREE and (self.k < 2 or self.k % 2):
            raise ModelError("fat tree radix k must be even and >= 2")
        if self.kind is TopologyKind.DRAGONFLY and min(
                self.groups, self.routers, self.nodes_per_router) < 1:
            raise ModelError("dragonfly needs g, a, p >= 1")
        if self.wire_classes is not None:
            if self.kind is not TopologyKind.DRAGONFLY:
                raise ModelError("per-class wire latencies need a dragonfly topology")
            if set(self.wire_classes) != {"l_tc", "l_intra", "l_inter"}:
                raise ModelError("wire_classes needs exactly l_tc, l_intra, l_inter")

    @property
    def capacity(self) -> float:
        if self.kind is TopologyKind.FAT_TREE:
            return self.k ** 3 // 4
        if self.kind is TopologyKind.DRAGONFLY:
            return self.groups * self.routers * self.nodes_per_router
        return float("inf")


def hops(spec: TopologySpec, i: int, j: int) -> int:
    """Number of switches on a minimal route between nodes ``i`` and ``j``."""
    if not (0 <= i < spec.capacity and 0 <= j < spec.capacity):
        raise ModelError(f"node pair ({i}, {j}) outside topology capacity {spec.capacity}")
    if i == j or spec.kind is TopologyKind.FLAT:
        return 0
    if spec.kind is TopologyKind.FAT_TREE:
        half = spec.k // 2
        if i // half == j // half:
            return 1
        if i // (half * half) == j // (half * half):
            return 3
        return 5
    p, a = spec.nodes_per_router, spec.routers
    if i // p == j // p:
        return 1
    if i // (a * p) == j // (a * p):
        return 2
    return 3


def wire_counts(spec: TopologySpec, i: int, j: int) -> dict[str, int]:
    """Per-class wire counts on the minimal Dragonfly route (terminal, local, global)."""
    h = hops(spec, i, j)
    if h == 0:
        return {}
    return {1: {"l_tc": 2}, 2: {"l_tc": 2, "l_intra": 1},
            3: {"l_tc": 2, "l_intra": 1, "l_inter": 1}}[h]


@dataclass(frozen=True)
class HeterogeneousParams:
    L_matrix: tuple[tuple[float, ...], ...]
    G_matrix: tuple[tuple[float, ...], ...]
    o: float = 0.0

    def __post_init__(self):
        n = len(self.L_matrix)
        for name, m in (("L_matrix", self.L_matrix), ("G_matrix", self.G_matrix)):
            if len(m) != n or any(len(row) != n for row in m):
                raise ModelError(f"{name} must be {n}x{n}")
            for a in range(n):
                for b in range(n):
                    if m[a][b] < 0:
                        raise ModelError(f"{name} has a negative entry")
                    if m[a][b] != m[b][a]:
                        raise ModelError(f"{name} must be symmetric")

    @property
    def P(self) -> int:
        return len(self.L_matrix)


class CostMode(enum.Enum):
    UNIFORM = "uniform"
    TOPOLOGY = "topology"
    HETEROGENEOUS = "heterogeneous"


def pair_symbol(prefix: str, i: int, j: int) -> str:
    a, b = (i, j) if i < j else (j, i)
    return f"{prefix}_{a}_{b}"


@dataclass(frozen=True)
class CostModel:
    """Cost-mode selection plus the parameter values bound to each symbol."""

    params: LogGPSParams = field(default_factory=LogGPSParams)
    mode: CostMode = CostMode.UNIFORM
    topology: TopologySpec | None = None
    hetero: HeterogeneousParams | None = None
    rv_fin_latency: bool = False

    def __post_init__(self):
        if self.mode is CostMode.TOPOLOGY and self.topology is None:
            raise ModelError("topology mode needs a topology spec")
        if self.mode is CostMode.HETEROGENEOUS and self.hetero is None:
            raise ModelError("heterogeneous mode needs L/G matrices")

    @property
    def o(self) -> float:
        return self.hetero.o if self.mode is CostMode.HETEROGENEOUS else self.params.o

    @property
    def eager_threshold(self) -> int | None:
        return self.params.S

    # -- symbols -----------------------------------------------------------
    @property
    def latency_symbols(self) -> tuple[str, ...]:
        if self.mode is CostMode.UNIFORM:
            return ("l",)
        if self.mode is CostMode.TOPOLOGY:
            wires = (tuple(self.topology.wire_classes) if self.topology.wire_classes
                     else ("l_wire",))
            return wires + ("d_switch",)
        n = self.hetero.P
        return tuple(pair_symbol("l", i, j) for i in range(n) for j in range(i + 1, n))

    @property
    def bandwidth_symbols(self) -> tuple[str, ...]:
        if self.mode is CostMode.HETEROGENEOUS:
            n = self.hetero.P
            return tuple(pair_symbol("g", i, j) for i in range(n) for j in range(i + 1, n))
        return ("g_bw",)

    @property
    def latency_symbol(self) -> str | None:
        """The symbol swept and differentiated by the analysis commands."""
        if self.mode is CostMode.UNIFORM:
            return "l"
        if self.mode is CostMode.TOPOLOGY:
            return "l_inter" if self.topology.wire_classes else "l_wire"
        return None

    @property
    def bandwidth_symbol(self) -> str | None:
        return None if self.mode is CostMode.HETEROGENEOUS else "g_bw"

    def bindings(self) -> dict[str, float]:
        if self.mode is CostMode.UNIFORM:
            return {"l": self.params.L, "g_bw": self.params.G}
        if self.mode is CostMode.TOPOLOGY:
            t = self.topology
            out = dict(t.wire_classes) if t.wire_classes else {"l_wire": t.l_wire}
            out.update(d_switch=t.d_switch, g_bw=self.params.G)
            return out
        out = {}
        n = self.hetero.P
        for i in range(n):
            for j in range(i + 1, n):
                out[pair_symbol("l", i, j)] = self.hetero.L_matrix[i][j]
                out[pair_symbol("g", i, j)] = self.hetero.G_matrix[i][j]
        return out

    # -- costs -------------------------------------------------------------
    def check_ranks(self, num_ranks: int) -> None:
        if self.mode is CostMode.TOPOLOGY and num_ranks > self.topology.capacity:
            raise ModelError(f"{num_ranks} ranks exceed topology capacity "
                             f"{self.topology.capacity}")
        if self.mode is CostMode.HETEROGENEOUS and num_ranks > self.hetero.P:
            raise ModelError(f"{num_ranks} ranks but {self.hetero.P}x{self.hetero.P} matrices")

    def vertex_cost(self, v: Vertex) -> CostExpr:
        if v.kind is VertexKind.CALC:
            return CostExpr(v.cost)
        return CostExpr(self.o)

    def latency_expr(self, i: int, j: int) -> CostExpr:
        if self.mode is CostMode.UNIFORM:
            return CostExpr(0, {"l": 1})
        if self.mode is CostMode.TOPOLOGY:
            t = self.topology
            h = hops(t, i, j)
            if t.wire_classes:
                return CostExpr(0, {**wire_counts(t, i, j), "d_switch": h})
            return CostExpr(0, {"l_wire": h + 1, "d_switch": h})
        return CostExpr(0, {pair_symbol("l", i, j): 1})

    def bandwidth_expr(self, i: int, j: int, size: int) -> CostExpr:
        per_byte = max(size - 1, 0)
        sym = (pair_symbol("g", i, j) if self.mode is CostMode.HETEROGENEOUS else "g_bw")
        return CostExpr(0, {sym: per_byte})

    def comm_edge_cost(self, i: int, j: int, size: int) -> CostExpr:
        return self.latency_expr(i, j) + self.bandwidth_expr(i, j, size)

    def edge_cost(self, graph: ExecutionGraph, e: Edge) -> CostExpr:
        """Cost added between the end of ``e.src`` and the start of ``e.dst``.

        Rendezvous timing: the sender's request-to-send needs one latency
        before the match (carried by local edges into the send); once
        matched, the data pull costs ``latency + (s-1)G`` towards both the
        receive (Comm edge) and the sender's successors (local edges out
        of the send).
        """
        src, dst = graph.vertices[e.src], graph.vertices[e.dst]
        if e.kind is EdgeKind.COMM:
            return self.comm_edge_cost(src.rank, dst.rank, src.size)
        if e.kind is EdgeKind.VIRTUAL:
            return ZERO
        cost = ZERO
        if src.kind is VertexKind.SEND and src.rendezvous:
            cost = cost + self.comm_edge_cost(src.rank, src.peer, src.size)
            if self.rv_fin_latency:
                cost = cost + self.latency_expr(src.rank, src.peer)
        if dst.kind is VertexKind.SEND and dst.rendezvous:
            cost = cost + self.latency_expr(dst.rank, dst.peer)
        return cost

    def release(self, graph: ExecutionGraph, v: Vertex) -> CostExpr | None:
        """Earliest start of a vertex beyond its predecessors, if any.

        Only a rendezvous send without local predecessors has one: its
        request-to-send leaves at time 0.
        """
        if v.kind is VertexKind.SEND and v.rendezvous and not graph.local_preds[v.id]:
            return self.latency_expr(v.rank, v.peer)
        return None

    def dominated_edge(self, graph: ExecutionGraph, e: Edge) -> bool:
        """True for zero-cost local edges into a rendezvous receive.

        The matched send already waits for each such predecessor through a
        Virtual edge, so these constraints can never be binding.
        """
        if e.kind is not EdgeKind.LOCAL:
            return False
        src, dst = graph.vertices[e.src], graph.vertices[e.dst]
        if dst.kind is not VertexKind.RECV or not dst.rendezvous:
            return False
        if src.kind is VertexKind.SEND and src.rendezvous:
            return False    # the edge carries a transfer cost the Virtual edge lacks
        send = graph.match.get(dst.id)
        return send is not None and (e.src, send) in graph.virtual_pairs

    def with_symbol(self, symbol: str, value: float) -> dict[str, float]:
        b = self.bindings()
        if symbol not in b:
            raise ModelError(f"unknown symbol {symbol!r}")
        b[symbol] = value
        return b


# -- configuration files -------------------------------------------------------

_TIME_UNITS = {"ns": 1.0, "us": 1e3, "ms": 1e6, "s": 1e9}
_QUANTITY = re.compile(r"^\s*([-+0-9.eE]+)\s*([a-z_]+)?\s*$")


def parse_quantity(value, default_unit: str = "ns", per_byte: bool = False) -> float:
    """Convert ``5``, ``"0.5us"`` or ``"0.013ns_per_byte"`` to ns (per byte)."""
    if isinstance(value, bool):
        raise ModelError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value) * _TIME_UNITS[_unit(default_unit, per_byte)]
    m = _QUANTITY.match(str(value))
    if not m:
        raise ModelError(f"cannot parse quantity {value!r}")
    unit = m.group(2) or default_unit
    return float(m.group(1)) * _TIME_UNITS[_unit(unit, per_byte)]


def _unit(unit: str, per_byte: bool) -> str:
    base = unit.removesuffix("_per_byte")
    if base not in _TIME_UNITS:
        raise ModelError(f"unknown unit {unit!r}")
    if unit.endswith("_per_byte") and not per_byte:
        raise ModelError(f"per-byte unit {unit!r} used for a time value")
    return base


def model_from_config(cfg: dict) -> CostModel:
    """Build a CostModel from a parsed JSON configuration dict."""
    cfg = dict(cfg)
    units = cfg.get("units", "ns")
    q = lambda key, default=0.0, pb=False: parse_quantity(cfg.get(key, default), units, pb)
    S = cfg.get("S")
    params = LogGPSParams(L=q("L"), o=q("o"), G=q("G", pb=True), g=q("g"),
                          P=int(cfg.get("P", 1)), S=None if S is None else int(S))
    topo = None
    hetero = None
    mode = CostMode(cfg.get("mode", "uniform"))
    if cfg.get("topology"):
        t = dict(cfg["topology"])
        tu = t.get("units", units)
        kind = TopologyKind(t.get("kind", "flat"))
        classes = t.get("wire_classes")
        topo = TopologySpec(
            kind=kind, k=int(t.get("k", 0)), groups=int(t.get("groups", t.get("g", 0))),
            routers=int(t.get("routers", t.get("a", 0))),
            nodes_per_router=int(t.get("nodes_per_router", t.get("p", 0))),
            l_wire=parse_quantity(t.get("l_wire", 0), tu),
            d_switch=parse_quantity(t.get("d_switch", 0), tu),
            wire_classes=({k: parse_quantity(v, tu) for k, v in classes.items()}
                          if classes else None))
        if "mode" not in cfg:
            mode = CostMode.TOPOLOGY
    if cfg.get("heterogeneous"):
        h = dict(cfg["heterogeneous"])
        hu = h.get("units", units)
        hetero = HeterogeneousParams(
            tuple(tuple(parse_quantity(x, hu) for x in row) for row in h["L_matrix"]),
            tuple(tuple(parse_quantity(x, hu, True) for x in row) for row in h["G_matrix"]),
            o=params.o)
        if "mode" not in cfg:
            mode = CostMode.HETEROGENEOUS
    return CostModel(params, mode, topo, hetero, bool(cfg.get("rv_fin_latency", False)))


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """Apply ``key=value`` / ``topology.key=value`` overrides to a config dict."""
    cfg = json.loads(json.dumps(cfg))
    for item in overrides:
        if "=" not in item:
            raise ModelError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return cfg


def load_config(path: str | Path | None, overrides: list[str] = ()) -> tuple[CostModel, dict]:
    cfg = {}
    if path:
        try:
            cfg = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: invalid JSON ({exc})") from None
    cfg = apply_overrides(cfg, list(overrides))
    return model_from_config(cfg), cfg


def uniform(L: float = 0.0, o: float = 0.0, G: float = 0.0, S: int | None = None,
            P: int = 1, g: float = 0.0, **kw) -> CostModel:
    """Shorthand for a uniform-mode model; all times in ns."""
    return CostModel(LogGPSParams(L=L, o=o, G=G, g=g, P=P, S=S), **kw)


def with_params(model: CostModel, **changes) -> CostModel:
    return replace(model, params=replace(model.params, **changes))
