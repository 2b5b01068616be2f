"""Line-oriented timestamped trace format and its conversion to schedules.

A trace looks like::

    ranks 2
    resolution_ns 1
    0 Send 100 120 to 1 size 4 tag 0
    1 Recv 50 130 from 0 size 4 tag 0

Each record is ``<rank> <op> <t_start> <t_end>`` followed by optional
``to|from <peer>``, ``size <bytes>``, ``tag <t>``, ``req <id>[,<id>...]``
and ``comm <n>`` fields.  Timestamps are integer clock ticks; the header's
``resolution_ns`` converts ticks to nanoseconds.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

from ..errors import ParseError, ScheduleError
from .collectives import (COLLECTIVE_TAG_BASE, COLLECTIVE_TAG_STRIDE,
                          CollectiveAlgorithm, expand_collective)
from .program import Calc, RankBuilder, Recv, Send, ScheduleProgram, build_program

log = logging.getLogger(__name__)


class TraceOp(enum.Enum):
    SEND = "Send"
    RECV = "Recv"
    ISEND = "Isend"
    IRECV = "Irecv"
    WAIT = "Wait"
    ALLREDUCE = "Allreduce"
    BCAST = "Bcast"
    REDUCE = "Reduce"
    BARRIER = "Barrier"


_P2P = {TraceOp.SEND, TraceOp.RECV, TraceOp.ISEND, TraceOp.IRECV}
_COLLECTIVES = {TraceOp.ALLREDUCE, TraceOp.BCAST, TraceOp.REDUCE, TraceOp.BARRIER}
_BY_NAME = {op.value.lower(): op for op in TraceOp}
_BY_NAME["waitall"] = TraceOp.WAIT


@dataclass(frozen=True)
class TraceRecord:
    rank: int
    op: TraceOp
    t_start: int
    t_end: int
    peer: int | None = None
    size_bytes: int = 0
    tag: int = 0
    request_ids: tuple[int, ...] = ()
    comm_size: int | None = None

    @property
    def request_id(self) -> int | None:
        return self.request_ids[0] if self.request_ids else None


@dataclass
class Trace:
    num_ranks: int
    resolution_ns: int = 1
    records: list[list[TraceRecord]] = field(default_factory=list)

    def __len__(self):
        return sum(len(r) for r in self.records)


def parse_trace(text: str) -> Trace:
    declared = None
    resolution = 1
    flat: list[TraceRecord] = []
    pending: dict[tuple[int, int], int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        if words[0] == "ranks":
            declared = _int(words, 1, lineno, "rank count")
            continue
        if words[0] == "resolution_ns":
            resolution = _int(words, 1, lineno, "resolution")
            if resolution <= 0:
                raise ParseError("resolution_ns must be positive", lineno)
            continue
        rec = _parse_record(words, lineno)
        if declared is not None and rec.rank >= declared:
            raise ParseError(f"rank {rec.rank} outside declared {declared} ranks", lineno)
        if rec.op in (TraceOp.ISEND, TraceOp.IRECV):
            pending[(rec.rank, rec.request_ids[0])] = lineno
        elif rec.op is TraceOp.WAIT:
            for rid in rec.request_ids:
                if pending.pop((rec.rank, rid), None) is None:
                    raise ParseError(
                        f"Wait on rank {rec.rank} references unknown request {rid}", lineno)
        flat.append(rec)
    num_ranks = declared if declared is not None else (
        max((r.rank for r in flat), default=-1) + 1)
    for rec in flat:
        if rec.peer is not None and rec.op in _P2P and not 0 <= rec.peer < num_ranks:
            raise ScheduleError(f"rank {rec.rank}: peer {rec.peer} out of range")
    per_rank: list[list[TraceRecord]] = [[] for _ in range(num_ranks)]
    for rec in flat:
        per_rank[rec.rank].append(rec)
    for recs in per_rank:
        recs.sort(key=lambda r: r.t_start)
    return Trace(num_ranks, resolution, per_rank)


def _int(words, i, lineno, what) -> int:
    try:
        return int(words[i])
    except (IndexError, ValueError):
        raise ParseError(f"expected integer {what}", lineno) from None


def _parse_record(words: list[str], lineno: int) -> TraceRecord:
    if len(words) < 4:
        raise ParseError("record needs '<rank> <op> <t_start> <t_end>'", lineno)
    rank = _int(words, 0, lineno, "rank")
    op = _BY_NAME.get(words[1].lower().removeprefix("mpi_"))
    if op is None:
        raise ParseError(f"unknown op {words[1]!r}", lineno)
    t_start = _int(words, 2, lineno, "t_start")
    t_end = _int(words, 3, lineno, "t_end")
    if rank < 0:
        raise ParseError("negative rank", lineno)
    if t_end < t_start:
        raise ParseError(f"t_end {t_end} < t_start {t_start}", lineno)
    fields: dict[str, str] = {}
    rest = words[4:]
    if len(rest) % 2:
        raise ParseError(f"dangling field {rest[-1]!r}", lineno)
    for key, value in zip(rest[::2], rest[1::2]):
        if key not in ("to", "from", "size", "tag", "req", "comm"):
            raise ParseError(f"unknown field {key!r}", lineno)
        if key in fields or (key in ("to", "from") and ("to" in fields or "from" in fields)):
            raise ParseError(f"repeated field {key!r}", lineno)
        fields[key] = value
    try:
        peer = int(fields.get("to", fields.get("from", -1)))
        size = int(fields.get("size", 0))
        tag = int(fields.get("tag", 0))
        reqs = tuple(int(x) for x in fields["req"].split(",")) if "req" in fields else ()
        comm = int(fields["comm"]) if "comm" in fields else None
    except ValueError:
        raise ParseError("non-integer field value", lineno) from None
    if size < 0 or tag < 0:
        raise ParseError("size and tag must be nonnegative", lineno)
    if op in _P2P:
        want = "to" if op in (TraceOp.SEND, TraceOp.ISEND) else "from"
        if want not in fields:
            raise ParseError(f"{op.value} needs '{want} <peer>'", lineno)
        if op in (TraceOp.ISEND, TraceOp.IRECV) and len(reqs) != 1:
            raise ParseError(f"{op.value} needs exactly one 'req <id>'", lineno)
    elif op is TraceOp.WAIT:
        if not reqs:
            raise ParseError("Wait needs 'req <id>'", lineno)
    else:
        if comm is None or comm < 1:
            raise ParseError(f"{op.value} needs 'comm <n>' with n >= 1", lineno)
    return TraceRecord(rank, op, t_start, t_end,
                       peer if peer >= 0 else None, size, tag, reqs, comm)


def serialize_trace(trace: Trace) -> str:
    out = [f"ranks {trace.num_ranks}", f"resolution_ns {trace.resolution_ns}"]
    for recs in trace.records:
        for r in recs:
            parts = [str(r.rank), r.op.value, str(r.t_start), str(r.t_end)]
            if r.op in _P2P:
                parts += ["to" if r.op in (TraceOp.SEND, TraceOp.ISEND) else "from",
                          str(r.peer)]
            if r.op in _P2P or r.op in _COLLECTIVES:
                parts += ["size", str(r.size_bytes)]
            if r.op in _P2P:
                parts += ["tag", str(r.tag)]
            if r.request_ids:
                parts += ["req", ",".join(map(str, r.request_ids))]
            if r.comm_size is not None:
                parts += ["comm", str(r.comm_size)]
            out.append(" ".join(parts))
    return "\n".join(out) + "\n"


DEFAULT_ALGORITHMS = {
    TraceOp.ALLREDUCE: CollectiveAlgorithm.ALLREDUCE_RECURSIVE_DOUBLING,
    TraceOp.BCAST: CollectiveAlgorithm.BCAST_BINOMIAL,
    TraceOp.REDUCE: CollectiveAlgorithm.REDUCE_BINOMIAL,
    TraceOp.BARRIER: CollectiveAlgorithm.BARRIER_DISSEMINATION,
}


def schedule_from_trace(trace: Trace, clock_resolution: int | None = None,
                        algorithms: dict | None = None) -> ScheduleProgram:
    """Infer computation from timestamp gaps and emit a schedule.

    The gap between the end of one call and the start of the next becomes a
    Calc op (the first call is measured from time 0).  Nonblocking calls emit
    their network op immediately; only ops after the matching Wait depend on
    it.  Collectives are replaced by their point-to-point expansion, with the
    k-th collective of every rank sharing tag block k.
    """
    res = clock_resolution or trace.resolution_ns
    algos = dict(DEFAULT_ALGORITHMS)
    if algorithms:
        algos.update(algorithms)
    builders = []
    for rank, recs in enumerate(trace.records):
        b = RankBuilder("o")
        frontier: list[str] = []
        prev_end = 0
        requests: dict[int, str] = {}
        n_coll = 0
        for rec in recs:
            gap = rec.t_start - prev_end
            if gap < 0:
                log.warning("rank %d: negative gap %d ticks before %s at %d; clamped to 0",
                            rank, gap, rec.op.value, rec.t_start)
            elif gap > 0:
                frontier = [b.add(Calc(gap * res), frontier)]
            prev_end = max(prev_end, rec.t_end)
            op = rec.op
            if op is TraceOp.SEND:
                frontier = [b.add(Send(rec.size_bytes, rec.peer, rec.tag), frontier)]
            elif op is TraceOp.RECV:
                frontier = [b.add(Recv(rec.size_bytes, rec.peer, rec.tag), frontier)]
            elif op is TraceOp.ISEND:
                requests[rec.request_ids[0]] = b.add(
                    Send(rec.size_bytes, rec.peer, rec.tag), frontier)
            elif op is TraceOp.IRECV:
                requests[rec.request_ids[0]] = b.add(
                    Recv(rec.size_bytes, rec.peer, rec.tag), frontier)
            elif op is TraceOp.WAIT:
                for rid in rec.request_ids:
                    if rid not in requests:
                        raise ScheduleError(f"rank {rank}: Wait on unknown request {rid}")
                    frontier = frontier + [requests.pop(rid)]
            else:
                if rank >= rec.comm_size:
                    raise ScheduleError(
                        f"rank {rank} outside {op.value} communicator of size {rec.comm_size}")
                tag_base = COLLECTIVE_TAG_BASE + n_coll * COLLECTIVE_TAG_STRIDE
                n_coll += 1
                frag = expand_collective(algos[op], rec.comm_size, rec.size_bytes, tag_base)
                frontier = splice(b, frag.ranks[rank], frontier)
        if requests:
            raise ScheduleError(
                f"rank {rank}: requests {sorted(requests)} never completed by a Wait")
        builders.append(b)
    return build_program(builders)


def splice(b: RankBuilder, ops, frontier: list[str]) -> list[str]:
    """Append a fragment's ops to ``b``; entry ops depend on ``frontier``.

    Returns the fragment's exit ops (those nothing else in it depends on), or
    ``frontier`` unchanged when the fragment is empty.
    """
    if not ops:
        return frontier
    renamed: dict[str, str] = {}
    needed: set[str] = set()
    for op in ops:
        deps = [renamed[d] for d in op.requires] or frontier
        renamed[op.label] = b.add(op.kind, deps)
        needed.update(op.requires)
    return [renamed[op.label] for op in ops if op.label not in needed]
