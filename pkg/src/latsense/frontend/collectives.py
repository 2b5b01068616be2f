"""Point-to-point expansions of the supported collective operations.

Each expansion returns a ScheduleProgram fragment over ``comm_size`` ranks.
Rounds are chained through ``requires`` so that a rank only starts round
``r + 1`` once both halves of round ``r`` completed.  Every round uses its
own tag ``tag_base + r``.
"""

from __future__ import annotations

import enum

from ..errors import ScheduleError
from .program import RankBuilder, Recv, ScheduleProgram, Send, build_program

# User tags stay below this value; collective rounds draw from above it.
COLLECTIVE_TAG_BASE = 1 << 20
COLLECTIVE_TAG_STRIDE = 1 << 12


class CollectiveAlgorithm(enum.Enum):
    ALLREDUCE_RECURSIVE_DOUBLING = "allreduce_recursive_doubling"
    ALLREDUCE_RING = "allreduce_ring"
    BCAST_BINOMIAL = "bcast_binomial"
    REDUCE_BINOMIAL = "reduce_binomial"
    BARRIER_DISSEMINATION = "barrier_dissemination"

    @classmethod
    def parse(cls, name: str) -> "CollectiveAlgorithm":
        key = name.strip().lower().replace("-", "_")
        aliases = {
            "recursive_doubling": cls.ALLREDUCE_RECURSIVE_DOUBLING,
            "rd": cls.ALLREDUCE_RECURSIVE_DOUBLING,
            "ring": cls.ALLREDUCE_RING,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ScheduleError(f"unknown collective algorithm {name!r}") from None


def expand_collective(algorithm: CollectiveAlgorithm, comm_size: int, size_bytes: int,
                      tag_base: int = COLLECTIVE_TAG_BASE) -> ScheduleProgram:
    if comm_size < 1:
        raise ScheduleError("collective needs comm_size >= 1")
    if size_bytes < 0:
        raise ScheduleError("collective size must be nonnegative")
    builders = [RankBuilder("c") for _ in range(comm_size)]
    if comm_size > 1:
        _EXPANDERS[algorithm](builders, comm_size, size_bytes, tag_base)
    return build_program(builders)


def _exchange(b: RankBuilder, peer: int, size: int, tag: int, after: list[str]) -> list[str]:
    s = b.add(Send(size, peer, tag), after)
    r = b.add(Recv(size, peer, tag), after)
    return [s, r]


def _recursive_doubling(builders, n, size, tag_base):
    pof2 = 1 << (n.bit_length() - 1)
    excess = n - pof2
    tails: list[list[str]] = [[] for _ in range(n)]
    tag = tag_base
    # Ranks >= pof2 hand their contribution to a partner below pof2 and
    # get the result back after the doubling rounds.
    if excess:
        for j in range(excess):
            extra = pof2 + j
            tails[extra] = [builders[extra].add(Send(size, j, tag))]
            tails[j] = [builders[j].add(Recv(size, extra, tag))]
        tag += 1
    rounds = pof2.bit_length() - 1
    for r in range(rounds):
        for i in range(pof2):
            tails[i] = _exchange(builders[i], i ^ (1 << r), size, tag, tails[i])
        tag += 1
    if excess:
        for j in range(excess):
            extra = pof2 + j
            builders[j].add(Send(size, extra, tag), tails[j])
            builders[extra].add(Recv(size, j, tag), tails[extra])


def _ring(builders, n, size, tag_base):
    chunk = -(-size // n) if size else 0
    prev_send: list[str | None] = [None] * n
    prev_recv: list[str | None] = [None] * n
    for step in range(2 * (n - 1)):
        tag = tag_base + step
        for i in range(n):
            b = builders[i]
            # The chunk forwarded in this step is the one received in the last.
            deps = [x for x in (prev_send[i], prev_recv[i]) if x]
            prev_send[i] = b.add(Send(chunk, (i + 1) % n, tag), deps)
            prev_recv[i] = b.add(Recv(chunk, (i - 1) % n, tag),
                                 [prev_recv[i]] if prev_recv[i] else [])


def _binomial_children(rank: int, n: int) -> list[int]:
    lowbit = rank & -rank if rank else 1 << n.bit_length()
    children = []
    mask = 1
    while mask < lowbit and rank + mask < n:
        children.append(rank + mask)
        mask <<= 1
    return children


def _binomial_parent(rank: int) -> int:
    return rank & (rank - 1)


def _bcast(builders, n, size, tag_base):
    for i in range(n):
        b = builders[i]
        deps = []
        if i:
            deps = [b.add(Recv(size, _binomial_parent(i), tag_base))]
        # Farthest child first, as in the usual MPICH binomial schedule.
        for child in reversed(_binomial_children(i, n)):
            deps = [b.add(Send(size, child, tag_base), deps)]


def _reduce(builders, n, size, tag_base):
    for i in range(n):
        b = builders[i]
        deps: list[str] = []
        for child in _binomial_children(i, n):
            deps = [b.add(Recv(size, child, tag_base), deps)]
        if i:
            b.add(Send(size, _binomial_parent(i), tag_base), deps)


def _dissemination(builders, n, size, tag_base):
    tails: list[list[str]] = [[] for _ in range(n)]
    dist = 1
    r = 0
    while dist < n:
        for i in range(n):
            b = builders[i]
            s = b.add(Send(size, (i + dist) % n, tag_base + r), tails[i])
            rv = b.add(Recv(size, (i - dist) % n, tag_base + r), tails[i])
            tails[i] = [s, rv]
        dist <<= 1
        r += 1


_EXPANDERS = {
    CollectiveAlgorithm.ALLREDUCE_RECURSIVE_DOUBLING: _recursive_doubling,
    CollectiveAlgorithm.ALLREDUCE_RING: _ring,
    CollectiveAlgorithm.BCAST_BINOMIAL: _bcast,
    CollectiveAlgorithm.REDUCE_BINOMIAL: _reduce,
    CollectiveAlgorithm.BARRIER_DISSEMINATION: _dissemination,
}
