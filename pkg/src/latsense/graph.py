"""Execution DAG of calc/send/recv vertices built from a ScheduleProgram."""

from __future__ import annotations

import enum
import heapq
from collections import defaultdict, deque
from dataclasses import dataclass
from functools import cached_property

from .errors import GraphError
from .frontend.program import Calc, Recv, ScheduleProgram, Send


class VertexKind(enum.Enum):
    CALC = "calc"
    SEND = "send"
    RECV = "recv"


class EdgeKind(enum.Enum):
    LOCAL = "local"
    COMM = "comm"
    VIRTUAL = "virtual"


@dataclass(frozen=True, slots=True)
class Vertex:
    id: int
    rank: int
    kind: VertexKind
    cost: int = 0          # ns, calc only
    size: int = 0          # bytes, send/recv only
    peer: int = -1
    tag: int = 0
    label: str = ""
    rendezvous: bool = False


@dataclass(frozen=True, slots=True)
class Edge:
    src: int
    dst: int
    kind: EdgeKind


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    vertices: tuple[int, ...] = ()

    def __str__(self):
        return f"[{self.code}] {self.message}"


class ExecutionGraph:
    """Immutable DAG; ``preds[v]``/``succs[v]`` hold ``(vertex, edge)`` pairs
    sorted by neighbour id."""

    def __init__(self, num_ranks: int, vertices, edges):
        self.num_ranks = num_ranks
        self.vertices: tuple[Vertex, ...] = tuple(vertices)
        self.edges: tuple[Edge, ...] = tuple(edges)
        preds = [[] for _ in self.vertices]
        succs = [[] for _ in self.vertices]
        for e in self.edges:
            preds[e.dst].append((e.src, e))
            succs[e.src].append((e.dst, e))
        self.preds = tuple(tuple(sorted(p, key=lambda x: x[0])) for p in preds)
        self.succs = tuple(tuple(sorted(s, key=lambda x: x[0])) for s in succs)

    def __len__(self):
        return len(self.vertices)

    def __eq__(self, other):
        return (isinstance(other, ExecutionGraph) and self.num_ranks == other.num_ranks
                and self.vertices == other.vertices and self.edges == other.edges)

    def __hash__(self):
        return hash((self.num_ranks, self.vertices, self.edges))

    @cached_property
    def topo_order(self) -> tuple[int, ...]:
        return tuple(topological_order(self))

    @cached_property
    def sinks(self) -> tuple[int, ...]:
        return tuple(v.id for v in self.vertices if not self.succs[v.id])

    @cached_property
    def local_preds(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(u for u, e in p if e.kind is EdgeKind.LOCAL) for p in self.preds)

    @cached_property
    def match(self) -> dict[int, int]:
        """Send id -> matched recv id and vice versa."""
        out = {}
        for e in self.edges:
            if e.kind is EdgeKind.COMM:
                out[e.src] = e.dst
                out[e.dst] = e.src
        return out

    @cached_property
    def virtual_pairs(self) -> frozenset[tuple[int, int]]:
        return frozenset((e.src, e.dst) for e in self.edges if e.kind is EdgeKind.VIRTUAL)

    def count_edges(self, kind: EdgeKind) -> int:
        return sum(e.kind is kind for e in self.edges)

    def stats(self) -> dict:
        return {
            "ranks": self.num_ranks,
            "vertices": len(self.vertices),
            "edges": len(self.edges),
            "comm_edges": self.count_edges(EdgeKind.COMM),
            "virtual_edges": self.count_edges(EdgeKind.VIRTUAL),
        }

    def to_dot(self) -> str:
        lines = ["digraph execution {"]
        for v in self.vertices:
            amount = v.cost if v.kind is VertexKind.CALC else v.size
            lines.append(f'  v{v.id} [label="{v.rank}:{v.kind.value}:{amount}"];')
        style = {EdgeKind.LOCAL: "solid", EdgeKind.COMM: "bold", EdgeKind.VIRTUAL: "dashed"}
        for e in self.edges:
            lines.append(f"  v{e.src} -> v{e.dst} [style={style[e.kind]}];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_graph(program: ScheduleProgram, eager_threshold: int | None = None) -> ExecutionGraph:
    """Build the execution graph.

    Messages of at least ``eager_threshold`` bytes use the rendezvous
    protocol (``None`` means everything is eager).  Each rendezvous message
    gets a Virtual edge from every local predecessor of its receive to its
    send, since the send cannot finish before the receiver is ready.
    """
    program.check()
    vertices: list[Vertex] = []
    edges: list[Edge] = []
    sends: dict[tuple, deque] = defaultdict(deque)
    recvs: dict[tuple, deque] = defaultdict(deque)
    for rank, ops in enumerate(program.ranks):
        ids = {}
        for pos, op in enumerate(ops):
            vid = len(vertices)
            ids[op.label] = vid
            k = op.kind
            if isinstance(k, Calc):
                v = Vertex(vid, rank, VertexKind.CALC, cost=k.cost, label=op.label)
            elif isinstance(k, Send):
                rv = eager_threshold is not None and k.size >= eager_threshold
                v = Vertex(vid, rank, VertexKind.SEND, size=k.size, peer=k.dest, tag=k.tag,
                           label=op.label, rendezvous=rv)
                sends[(rank, k.dest, k.tag)].append((vid, pos))
            else:
                rv = eager_threshold is not None and k.size >= eager_threshold
                v = Vertex(vid, rank, VertexKind.RECV, size=k.size, peer=k.src, tag=k.tag,
                           label=op.label, rendezvous=rv)
                recvs[(k.src, rank, k.tag)].append((vid, pos))
            vertices.append(v)
        for op in ops:
            for dep in op.requires:
                edges.append(Edge(ids[dep], ids[op.label], EdgeKind.LOCAL))

    problems = []
    pairs = []
    for key in sorted(set(sends) | set(recvs)):
        sq, rq = sends.get(key, deque()), recvs.get(key, deque())
        while sq and rq:
            s, _ = sq.popleft()
            r, _ = rq.popleft()
            if vertices[s].size != vertices[r].size:
                problems.append(f"size mismatch: send {vertices[s].size}B from rank {key[0]} "
                                f"vs recv {vertices[r].size}B on rank {key[1]} (tag {key[2]})")
            pairs.append((s, r))
        for vid, pos in sq:
            problems.append(f"unmatched send on rank {key[0]} to {key[1]} tag {key[2]} "
                            f"at position {pos}")
        for vid, pos in rq:
            problems.append(f"unmatched recv on rank {key[1]} from {key[0]} tag {key[2]} "
                            f"at position {pos}")
    if problems:
        raise GraphError("message matching failed", problems)

    local_in: dict[int, list[int]] = defaultdict(list)
    for e in edges:
        local_in[e.dst].append(e.src)
    for s, r in sorted(pairs):
        edges.append(Edge(s, r, EdgeKind.COMM))
        if vertices[s].rendezvous:
            for u in sorted(set(local_in[r])):
                edges.append(Edge(u, s, EdgeKind.VIRTUAL))
    graph = ExecutionGraph(program.num_ranks, vertices, edges)
    try:
        graph.topo_order
    except GraphError:
        cyc = find_cycles(graph)
        raise GraphError("dependency cycle (deadlock)",
                         [", ".join(_name(graph, v) for v in comp) for comp in cyc[:5]]
                         ) from None
    return graph


def _name(graph: ExecutionGraph, vid: int) -> str:
    v = graph.vertices[vid]
    return f"{v.rank}:{v.label or vid}"


def topological_order(graph: ExecutionGraph) -> list[int]:
    """Kahn's algorithm; ties go to the smallest id, i.e. (rank, position)."""
    indeg = [len(p) for p in graph.preds]
    heap = [v for v, d in enumerate(indeg) if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for w, _ in graph.succs[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(heap, w)
    if len(order) != len(graph.vertices):
        raise GraphError("graph contains a cycle",
                         [", ".join(map(str, c)) for c in find_cycles(graph)[:5]])
    return order


def find_cycles(graph: ExecutionGraph) -> list[list[int]]:
    """Vertex sets of all nontrivial strongly connected components."""
    import networkx as nx

    g = nx.DiGraph()
    g.add_nodes_from(range(len(graph.vertices)))
    g.add_edges_from((e.src, e.dst) for e in graph.edges)
    comps = [sorted(c) for c in nx.strongly_connected_components(g)
             if len(c) > 1 or any(e.src == e.dst for e in graph.edges if e.src in c)]
    return sorted(comps)


def validate(graph: ExecutionGraph) -> list[Diagnostic]:
    """Check every structural invariant; an empty list means the graph is sound."""
    out: list[Diagnostic] = []
    V = graph.vertices
    for comp in find_cycles(graph):
        out.append(Diagnostic("cycle", "cycle through vertices " + ", ".join(map(str, comp)),
                              tuple(comp)))
    comm_count = defaultdict(int)
    for e in graph.edges:
        if not (0 <= e.src < len(V) and 0 <= e.dst < len(V)):
            out.append(Diagnostic("dangling", f"edge {e.src}->{e.dst} references a missing vertex"))
            continue
        a, b = V[e.src], V[e.dst]
        if e.kind is EdgeKind.LOCAL and a.rank != b.rank:
            out.append(Diagnostic("local-rank", f"local edge {a.id}->{b.id} crosses ranks",
                                  (a.id, b.id)))
        elif e.kind is EdgeKind.COMM:
            comm_count[a.id] += 1
            comm_count[b.id] += 1
            if a.kind is not VertexKind.SEND or b.kind is not VertexKind.RECV:
                out.append(Diagnostic("comm-kind", f"comm edge {a.id}->{b.id} is not send->recv",
                                      (a.id, b.id)))
            if a.rank == b.rank:
                out.append(Diagnostic("comm-rank", f"comm edge {a.id}->{b.id} stays on rank {a.rank}",
                                      (a.id, b.id)))
            if a.size != b.size:
                out.append(Diagnostic("size-mismatch",
                                      f"comm edge {a.id}->{b.id}: {a.size}B vs {b.size}B",
                                      (a.id, b.id)))
            if a.tag != b.tag:
                out.append(Diagnostic("tag-mismatch",
                                      f"comm edge {a.id}->{b.id}: tag {a.tag} vs {b.tag}",
                                      (a.id, b.id)))
            if a.peer != b.rank or b.peer != a.rank:
                out.append(Diagnostic("peer-mismatch",
                                      f"comm edge {a.id}->{b.id} disagrees with declared peers",
                                      (a.id, b.id)))
        elif e.kind is EdgeKind.VIRTUAL:
            if b.kind is not VertexKind.SEND or not b.rendezvous:
                out.append(Diagnostic("virtual-target",
                                      f"virtual edge {a.id}->{b.id} does not end at a rendezvous send",
                                      (a.id, b.id)))
    for v in V:
        if v.kind is not VertexKind.CALC and comm_count[v.id] != 1:
            out.append(Diagnostic("unmatched",
                                  f"{v.kind.value} {v.id} on rank {v.rank} has "
                                  f"{comm_count[v.id]} comm edges", (v.id,)))
    return out
