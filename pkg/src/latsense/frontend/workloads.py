"""Synthetic schedule generators used as a test and demo corpus."""

from __future__ import annotations

import math
import random

from ..errors import ScheduleError
from .collectives import (COLLECTIVE_TAG_BASE, COLLECTIVE_TAG_STRIDE,
                          CollectiveAlgorithm, expand_collective)
from .program import Calc, RankBuilder, Recv, ScheduleProgram, Send, build_program
from .trace import splice

PATTERNS = ("halo2d", "allreduce_loop", "pipeline", "random_dag")


def generate_workload(pattern: str, P: int, iterations: int = 1, msg_size: int = 8,
                      calc_cost: int = 1000, *, seed: int = 0,
                      algorithm: CollectiveAlgorithm | str =
                      CollectiveAlgorithm.ALLREDUCE_RECURSIVE_DOUBLING,
                      num_events: int | None = None) -> ScheduleProgram:
    """Build a deterministic synthetic program.

    ``calc_cost`` is in ns.  ``seed`` and ``num_events`` only matter for
    ``random_dag``; ``algorithm`` only for ``allreduce_loop``.
    """
    if P < 1:
        raise ScheduleError("P must be >= 1")
    if iterations < 0 or msg_size < 0 or calc_cost < 0:
        raise ScheduleError("iterations, msg_size and calc_cost must be nonnegative")
    if pattern == "pipeline":
        return _pipeline(P, iterations, msg_size, calc_cost)
    if pattern == "halo2d":
        return _halo2d(P, iterations, msg_size, calc_cost)
    if pattern == "allreduce_loop":
        if isinstance(algorithm, str):
            algorithm = CollectiveAlgorithm.parse(algorithm)
        return _allreduce_loop(P, iterations, msg_size, calc_cost, algorithm)
    if pattern == "random_dag":
        return random_dag(P, num_events or 20 * max(iterations, 1), seed=seed,
                          max_size=msg_size, max_calc=calc_cost)
    raise ScheduleError(f"unknown pattern {pattern!r}; expected one of {PATTERNS}")


def _pipeline(P, iterations, size, cost):
    builders = [RankBuilder() for _ in range(P)]
    tails: list[list[str]] = [[] for _ in range(P)]
    for it in range(iterations):
        for i in range(P):
            b = builders[i]
            tails[i] = [b.add(Calc(cost), tails[i])]
            if i > 0:
                tails[i] = [b.add(Recv(size, i - 1, it), tails[i])]
            if i < P - 1:
                tails[i] = [b.add(Send(size, i + 1, it), tails[i])]
    if iterations:
        for i in range(P):
            builders[i].add(Calc(cost), tails[i])
    return build_program(builders)


def grid_shape(P: int) -> tuple[int, int]:
    """Most square ``a x b`` factorisation with ``a, b >= 2``."""
    for a in range(math.isqrt(P), 1, -1):
        if P % a == 0:
            return a, P // a
    raise ScheduleError(f"halo2d needs P = a*b with a, b >= 2; got P={P}")


def _halo2d(P, iterations, size, cost):
    rows, cols = grid_shape(P)
    builders = [RankBuilder() for _ in range(P)]
    tails: list[list[str]] = [[] for _ in range(P)]
    for it in range(iterations):
        for i in range(P):
            b = builders[i]
            r, c = divmod(i, cols)
            work = b.add(Calc(cost), tails[i])
            done = []
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    peer = rr * cols + cc
                    done.append(b.add(Recv(size, peer, it), [work]))
                    done.append(b.add(Send(size, peer, it), [work]))
            tails[i] = done or [work]
    if iterations:
        for i in range(P):
            builders[i].add(Calc(cost), tails[i])
    return build_program(builders)


def _allreduce_loop(P, iterations, size, cost, algorithm):
    builders = [RankBuilder() for _ in range(P)]
    tails: list[list[str]] = [[] for _ in range(P)]
    for it in range(iterations):
        frag = expand_collective(algorithm, P, size,
                                 COLLECTIVE_TAG_BASE + it * COLLECTIVE_TAG_STRIDE)
        for i in range(P):
            tails[i] = [builders[i].add(Calc(cost), tails[i])]
            tails[i] = splice(builders[i], frag.ranks[i], tails[i])
    return build_program(builders)


def random_dag(P: int, num_events: int, *, seed: int = 0, max_size: int = 64,
               max_calc: int = 1000, p_message: float = 0.5, p_branch: float = 0.25,
               num_tags: int = 2) -> ScheduleProgram:
    """Random program whose ops follow one global event order.

    Every dependency and message points forward in that order, so the
    resulting execution graph is acyclic by construction.  Some ops skip
    their rank's previous op and depend on an older one instead, which
    produces nonblocking-like overlap.
    """
    if P < 1:
        raise ScheduleError("P must be >= 1")
    rng = random.Random(seed)
    builders = [RankBuilder() for _ in range(P)]
    labels: list[list[str]] = [[] for _ in range(P)]

    def deps(rank: int) -> list[str]:
        own = labels[rank]
        if not own:
            return []
        if len(own) > 1 and rng.random() < p_branch:
            picks = rng.sample(own[-4:], k=min(2, len(own[-4:])))
            return sorted(picks, key=own.index)
        return [own[-1]]

    for _ in range(num_events):
        if P > 1 and rng.random() < p_message:
            a, b = rng.sample(range(P), 2)
            size = rng.randint(1, max(1, max_size))
            tag = rng.randrange(num_tags)
            labels[a].append(builders[a].add(Send(size, b, tag), deps(a)))
            labels[b].append(builders[b].add(Recv(size, a, tag), deps(b)))
        else:
            r = rng.randrange(P)
            labels[r].append(builders[r].add(Calc(rng.randint(0, max_calc)), deps(r)))
    return build_program(builders)
