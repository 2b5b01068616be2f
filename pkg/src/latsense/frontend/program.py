"""In-memory schedule representation: per-rank calc/send/recv operations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from ..errors import ScheduleError


@dataclass(frozen=True)
class Calc:
    cost: int  # ns


@dataclass(frozen=True)
class Send:
    size: int
    dest: int
    tag: int = 0


@dataclass(frozen=True)
class Recv:
    size: int
    src: int
    tag: int = 0


OpKind = Union[Calc, Send, Recv]


@dataclass(frozen=True)
class ScheduleOp:
    label: str
    kind: OpKind
    requires: tuple[str, ...] = ()


@dataclass(frozen=True)
class ScheduleProgram:
    """A GOAL-style program: ``ranks[i]`` is the ordered op list of rank ``i``."""

    num_ranks: int
    ranks: tuple[tuple[ScheduleOp, ...], ...] = field(default=())

    def __post_init__(self):
        if len(self.ranks) < self.num_ranks:
            padded = tuple(self.ranks) + ((),) * (self.num_ranks - len(self.ranks))
            object.__setattr__(self, "ranks", padded)
        elif len(self.ranks) > self.num_ranks:
            raise ScheduleError(
                f"{len(self.ranks)} rank bodies for a {self.num_ranks}-rank program")

    @property
    def num_ops(self) -> int:
        return sum(len(ops) for ops in self.ranks)

    def count(self, kind: type) -> int:
        return sum(isinstance(op.kind, kind) for ops in self.ranks for op in ops)

    def check(self) -> None:
        """Raise ScheduleError unless labels are unique, dependencies resolve
        and the per-rank dependency relation is acyclic."""
        for rank, ops in enumerate(self.ranks):
            seen: dict[str, int] = {}
            for pos, op in enumerate(ops):
                if op.label in seen:
                    raise ScheduleError(f"rank {rank}: duplicate label {op.label!r}")
                seen[op.label] = pos
                _check_kind(rank, op, self.num_ranks)
            for op in ops:
                for dep in op.requires:
                    if dep not in seen:
                        raise ScheduleError(
                            f"rank {rank}: {op.label!r} requires undefined label {dep!r}")
            _check_acyclic(rank, ops, seen)


def _check_kind(rank: int, op: ScheduleOp, num_ranks: int) -> None:
    kind = op.kind
    if isinstance(kind, Calc):
        if kind.cost < 0:
            raise ScheduleError(f"rank {rank}: {op.label!r} has negative cost")
        return
    peer = kind.dest if isinstance(kind, Send) else kind.src
    if kind.size < 0 or kind.tag < 0:
        raise ScheduleError(f"rank {rank}: {op.label!r} has negative size or tag")
    if not 0 <= peer < num_ranks:
        raise ScheduleError(f"rank {rank}: {op.label!r} peer {peer} out of range")
    if peer == rank:
        raise ScheduleError(f"rank {rank}: {op.label!r} addresses its own rank")


def _check_acyclic(rank: int, ops, index: dict[str, int]) -> None:
    state = [0] * len(ops)  # 0 new, 1 on stack, 2 done
    for start in range(len(ops)):
        if state[start]:
            continue
        stack = [(start, iter(ops[start].requires))]
        state[start] = 1
        while stack:
            node, deps = stack[-1]
            nxt = next(deps, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
                continue
            j = index[nxt]
            if state[j] == 1:
                raise ScheduleError(
                    f"rank {rank}: dependency cycle through {ops[j].label!r}")
            if state[j] == 0:
                state[j] = 1
                stack.append((j, iter(ops[j].requires)))


class RankBuilder:
    """Append-only helper used by generators to emit uniquely labelled ops."""

    def __init__(self, prefix: str = "o"):
        self.ops: list[ScheduleOp] = []
        self._prefix = prefix

    def add(self, kind: OpKind, requires=()) -> str:
        label = f"{self._prefix}{len(self.ops)}"
        self.ops.append(ScheduleOp(label, kind, tuple(dict.fromkeys(requires))))
        return label


def build_program(builders: list[RankBuilder]) -> ScheduleProgram:
    return ScheduleProgram(len(builders), tuple(tuple(b.ops) for b in builders))
