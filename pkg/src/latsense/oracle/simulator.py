"""Discrete-event LogGPS replay of an execution graph.

Shares the cost formulas of :class:`CostModel` but none of the engine's
code: time advances through a priority queue of events instead of a
topological sweep, which makes it an independent check of both
``engine.evaluate`` and the LP solver.
"""

from __future__ import annotations

import csv
import enum
import heapq
import io
from dataclasses import dataclass

from ..costmodel import CostModel
from ..errors import DeadlockError, ModelError
from ..graph import ExecutionGraph, VertexKind


class EventKind(enum.IntEnum):
    # order matters for ties at equal (time, vertex): arrivals before readiness
    MSG_ARRIVE = 0
    VERTEX_READY = 1
    VERTEX_COMPLETE = 2


@dataclass(frozen=True, order=True)
class SimEvent:
    time: float
    vertex_id: int
    kind: EventKind


@dataclass
class SimResult:
    makespan: float
    start: list[float]
    end: list[float]
    events: int

    def timeline_csv(self, graph: ExecutionGraph) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["vertex_id", "rank", "kind", "t_start_ns", "t_end_ns"])
        for v in graph.vertices:
            w.writerow([v.id, v.rank, v.kind.value, repr(self.start[v.id]),
                        repr(self.end[v.id])])
        return buf.getvalue()


def simulate(graph: ExecutionGraph, model: CostModel, bindings: dict[str, float] | None = None,
             strict_g: bool = False) -> SimResult:
    """Replay ``graph`` and return per-vertex start/end times in ns.

    Args:
        graph: execution graph.
        model: cost model; ``bindings`` override its symbol values.
        strict_g: serialise sends/receives of one rank so that consecutive
            injections are at least ``g`` apart (LogGP gap).  Off by default,
            which matches the engine.

    Raises:
        DeadlockError: some vertices never became ready (cyclic input).
        ModelError: a negative cost, which would move time backwards.
    """
    b = model.bindings()
    if bindings:
        b.update(bindings)
    n = len(graph.vertices)
    pending = [len(p) for p in graph.preds]
    ready_at = [0.0] * n
    start = [float("nan")] * n
    end = [float("nan")] * n
    g = model.params.g
    next_injection: dict[int, float] = {}
    heap: list[SimEvent] = []

    for v in graph.vertices:
        rel = model.release(graph, v)
        if rel is not None:
            pending[v.id] += 1
            t = rel.value(b)
            if t < 0:
                raise ModelError(f"negative release time {t} for vertex {v.id}")
            heapq.heappush(heap, SimEvent(t, v.id, EventKind.MSG_ARRIVE))
        elif pending[v.id] == 0:
            heapq.heappush(heap, SimEvent(0.0, v.id, EventKind.VERTEX_READY))

    count = 0
    while heap:
        ev = heapq.heappop(heap)
        count += 1
        vid = ev.vertex_id
        if ev.kind is EventKind.MSG_ARRIVE:
            ready_at[vid] = max(ready_at[vid], ev.time)
            pending[vid] -= 1
            if pending[vid] == 0:
                heapq.heappush(heap, SimEvent(ready_at[vid], vid, EventKind.VERTEX_READY))
        elif ev.kind is EventKind.VERTEX_READY:
            v = graph.vertices[vid]
            t = ev.time
            if strict_g and v.kind is not VertexKind.CALC:
                t = max(t, next_injection.get(v.rank, t))
                next_injection[v.rank] = t + g
            cost = model.vertex_cost(v).value(b)
            if cost < 0:
                raise ModelError(f"negative cost {cost} for vertex {vid}")
            start[vid] = t
            heapq.heappush(heap, SimEvent(t + cost, vid, EventKind.VERTEX_COMPLETE))
        else:
            end[vid] = ev.time
            for w, e in graph.succs[vid]:
                delay = model.edge_cost(graph, e).value(b)
                if delay < 0:
                    raise ModelError(f"negative edge cost {delay} on {e.src}->{e.dst}")
                heapq.heappush(heap, SimEvent(ev.time + delay, w, EventKind.MSG_ARRIVE))

    stuck = [v for v in range(n) if end[v] != end[v]]
    if stuck:
        raise DeadlockError(stuck)
    T = max((end[s] for s in graph.sinks), default=0.0)
    return SimResult(T, start, end, count)
