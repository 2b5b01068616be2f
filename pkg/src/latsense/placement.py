"""Pairwise sensitivity matrices and swap-based rank placement.

The LP is built once in heterogeneous mode, with one latency symbol
``l_i_j`` and one inverse-bandwidth symbol ``g_i_j`` per rank pair.  A
mapping of ranks onto architecture slots only changes the lower bounds of
those symbols, so trying a mapping costs one forward pass.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .costmodel import CostMode, CostModel, HeterogeneousParams, pair_symbol
from .engine import build_lp, solve
from .engine.lp import LpModel
from .errors import ModelError, ParseError
from .graph import ExecutionGraph

MAX_EXHAUSTIVE = 40_320


@dataclass(frozen=True)
class ArchitectureGraph:
    """Pairwise slot latency ``L`` (ns) and inverse bandwidth ``G`` (ns/byte).

    ``node_of`` is set for grouped architectures and lets the exhaustive
    search skip mappings that only permute slots within a node.
    """

    L: tuple[tuple[float, ...], ...]
    G: tuple[tuple[float, ...], ...]
    node_of: tuple[int, ...] | None = None

    def __post_init__(self):
        n = len(self.L)
        for name, m in (("L", self.L), ("G", self.G)):
            if len(m) != n or any(len(row) != n for row in m):
                raise ModelError(f"architecture {name} matrix must be {n}x{n}")
            for i in range(n):
                for j in range(n):
                    if m[i][j] < 0:
                        raise ModelError(f"architecture {name}[{i}][{j}] is negative")
                    if m[i][j] != m[j][i]:
                        raise ModelError(f"architecture {name} matrix is not symmetric")

    @property
    def num_slots(self) -> int:
        return len(self.L)

    @classmethod
    def grouped(cls, nodes: int, slots_per_node: int, intra: tuple[float, float],
                inter: tuple[float, float]) -> "ArchitectureGraph":
        """``intra``/``inter`` are ``(L_ns, G_ns_per_byte)`` pairs."""
        if nodes < 1 or slots_per_node < 1:
            raise ModelError("nodes and slots_per_node must be positive")
        node_of = tuple(s // slots_per_node for s in range(nodes * slots_per_node))
        L = tuple(tuple(intra[0] if a == b else inter[0] for b in node_of) for a in node_of)
        G = tuple(tuple(intra[1] if a == b else inter[1] for b in node_of) for a in node_of)
        return cls(L, G, node_of)

    @classmethod
    def uniform(cls, slots: int, L: float, G: float) -> "ArchitectureGraph":
        return cls.grouped(1, slots, (L, G), (L, G))

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureGraph":
        try:
            if "nodes" in d:
                intra, inter = d["intra"], d.get("inter", d["intra"])
                return cls.grouped(int(d["nodes"]), int(d["slots_per_node"]),
                                   (float(intra["L_ns"]), float(intra.get("G_ns_per_byte", 0))),
                                   (float(inter["L_ns"]), float(inter.get("G_ns_per_byte", 0))))
            L = tuple(tuple(float(x) for x in row) for row in d["L_matrix"])
            G = tuple(tuple(float(x) for x in row) for row in
                      d.get("G_matrix", [[0.0] * len(L)] * len(L)))
            return cls(L, G)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad architecture description: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "ArchitectureGraph":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc})") from None


Mapping = tuple[int, ...]   # rank -> slot


def check_mapping(pi, num_ranks: int, arch: ArchitectureGraph) -> Mapping:
    pi = tuple(int(s) for s in pi)
    if len(pi) != num_ranks:
        raise ModelError(f"mapping covers {len(pi)} ranks, program has {num_ranks}")
    if len(set(pi)) != len(pi):
        raise ModelError("mapping is not injective")
    if any(not 0 <= s < arch.num_slots for s in pi):
        raise ModelError(f"mapping uses slots outside 0..{arch.num_slots - 1}")
    return pi


def random_mapping(num_ranks: int, arch: ArchitectureGraph, seed: int = 0) -> Mapping:
    if num_ranks > arch.num_slots:
        raise ModelError(f"{num_ranks} ranks do not fit on {arch.num_slots} slots")
    return tuple(random.Random(seed).sample(range(arch.num_slots), num_ranks))


def mapping_csv(pi: Mapping) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "slot"])
    w.writerows(enumerate(pi))
    return buf.getvalue()


def read_mapping_csv(text: str) -> Mapping:
    rows = list(csv.reader(io.StringIO(text)))
    if rows and rows[0] and not rows[0][0].strip().lstrip("-").isdigit():
        rows = rows[1:]
    try:
        pairs = sorted((int(r[0]), int(r[1])) for r in rows if r)
    except (ValueError, IndexError) as exc:
        raise ParseError(f"bad mapping CSV: {exc}") from None
    if [r for r, _ in pairs] != list(range(len(pairs))):
        raise ParseError("mapping CSV must list ranks 0..P-1 exactly once")
    return tuple(s for _, s in pairs)


@dataclass
class SensitivityMatrices:
    D_L: list[list[float]]
    D_G: list[list[float]]


class PlacementModel:
    """LP with per-pair symbols whose lower bounds follow a mapping."""

    def __init__(self, graph: ExecutionGraph, arch: ArchitectureGraph,
                 base: CostModel | None = None):
        P = graph.num_ranks
        if P > arch.num_slots:
            raise ModelError(f"{P} ranks do not fit on {arch.num_slots} slots")
        base = base or CostModel()
        zeros = tuple((0.0,) * P for _ in range(P))
        hetero = HeterogeneousParams(zeros, zeros, o=base.params.o)
        self.model = CostModel(base.params, CostMode.HETEROGENEOUS, hetero=hetero,
                               rv_fin_latency=base.rv_fin_latency)
        self.graph = graph
        self.arch = arch
        self.P = P
        self.lp: LpModel = build_lp(graph, self.model)

    def bounds(self, pi: Mapping) -> dict[str, float]:
        A = self.arch
        out = {}
        for i in range(self.P):
            for j in range(i + 1, self.P):
                out[pair_symbol("l", i, j)] = A.L[pi[i]][pi[j]]
                out[pair_symbol("g", i, j)] = A.G[pi[i]][pi[j]]
        return out

    def solve(self, pi: Mapping):
        pi = check_mapping(pi, self.P, self.arch)
        return solve(self.lp.with_bounds(**self.bounds(pi)), ranging=())

    def predict(self, pi: Mapping) -> float:
        return self.solve(pi).objective

    def matrices(self, report) -> SensitivityMatrices:
        P = self.P
        DL = [[0.0] * P for _ in range(P)]
        DG = [[0.0] * P for _ in range(P)]
        for i in range(P):
            for j in range(i + 1, P):
                DL[i][j] = DL[j][i] = report.reduced_costs[pair_symbol("l", i, j)]
                DG[i][j] = DG[j][i] = report.reduced_costs[pair_symbol("g", i, j)]
        return SensitivityMatrices(DL, DG)


def sensitivity_matrices(graph: ExecutionGraph, arch: ArchitectureGraph, pi: Mapping,
                         base: CostModel | None = None) -> SensitivityMatrices:
    pm = PlacementModel(graph, arch, base)
    return pm.matrices(pm.solve(pi))


def swap_gain(i: int, j: int, D_L, D_G, pi: Mapping, arch: ArchitectureGraph) -> float:
    """First-order runtime reduction (ns) from exchanging the slots of ranks i and j."""
    if i == j:
        raise ModelError("swap_gain needs two distinct ranks")
    L, G = arch.L, arch.G
    a, b = pi[i], pi[j]
    gain = 0.0
    for k, c in enumerate(pi):
        if k == i or k == j:
            continue
        gain += D_L[i][k] * (L[a][c] - L[b][c]) + D_L[j][k] * (L[b][c] - L[a][c])
        gain += D_G[i][k] * (G[a][c] - G[b][c]) + D_G[j][k] * (G[b][c] - G[a][c])
    return gain


@dataclass
class PlacementResult:
    mapping: Mapping
    T: float
    initial_mapping: Mapping
    T_initial: float
    iterations: int
    accepted_swaps: list[tuple[int, int]] = field(default_factory=list)
    history: list[float] = field(default_factory=list)


def map_processes(graph: ExecutionGraph, arch: ArchitectureGraph, pi0: Mapping | None = None,
                  base: CostModel | None = None, seed: int = 0,
                  max_iterations: int = 1000, candidates: int = 4) -> PlacementResult:
    """Refine a mapping by repeatedly applying the most promising rank swap.

    Each iteration reads the pairwise sensitivities of the current mapping,
    ranks swaps by estimated gain (ties go to the lowest ``(i, j)``) and
    re-solves with the best one.  It stops when no swap promises a gain or
    when the predicted runtime fails to improve, in which case the previous
    mapping is restored.

    Args:
        candidates: how many positive-gain swaps, best first, are tried
            before giving up on an iteration.  ``1`` gives the plain
            one-swap-per-iteration heuristic.
    """
    if candidates < 1:
        raise ModelError("candidates must be >= 1")
    pm = PlacementModel(graph, arch, base)
    if pi0 is None:
        pi0 = random_mapping(pm.P, arch, seed)
    pi = check_mapping(pi0, pm.P, arch)
    report = pm.solve(pi)
    best_T = report.objective
    result = PlacementResult(pi, best_T, pi, best_T, 0, [], [best_T])
    for _ in range(max_iterations):
        result.iterations += 1
        D = pm.matrices(report)
        gains = []
        for i, j in itertools.combinations(range(pm.P), 2):
            g = swap_gain(i, j, D.D_L, D.D_G, pi, arch)
            if g > 0:
                gains.append((-g, i, j))
        if not gains:
            break
        improved = False
        for _, i, j in sorted(gains)[:candidates]:
            trial = list(pi)
            trial[i], trial[j] = trial[j], trial[i]
            trial = tuple(trial)
            rep = pm.solve(trial)
            result.history.append(rep.objective)
            if rep.objective < best_T:
                pi, report, best_T = trial, rep, rep.objective
                result.accepted_swaps.append((i, j))
                improved = True
                break
        if not improved:
            break
    result.mapping = pi
    result.T = best_T
    return result


def exhaustive_mapping(graph: ExecutionGraph, arch: ArchitectureGraph,
                       base: CostModel | None = None,
                       limit: int = MAX_EXHAUSTIVE) -> tuple[Mapping, float, int]:
    """Best mapping by brute force; returns ``(mapping, T, mappings tried)``.

    For grouped architectures only the assignment of ranks to nodes is
    enumerated, since slots within a node are interchangeable.
    """
    pm = PlacementModel(graph, arch, base)
    P = pm.P
    if arch.node_of is not None:
        cands = _node_assignments(P, arch.node_of)
    else:
        cands = itertools.permutations(range(arch.num_slots), P)
    best = None
    tried = 0
    for pi in cands:
        tried += 1
        if tried > limit:
            raise ModelError(f"more than {limit} mappings; exhaustive search refused")
        T = pm.predict(pi)
        if best is None or T < best[1]:
            best = (tuple(pi), T)
    return best[0], best[1], tried


def _node_assignments(P: int, node_of: tuple[int, ...]):
    slots_by_node: dict[int, list[int]] = {}
    for s, n in enumerate(node_of):
        slots_by_node.setdefault(n, []).append(s)
    nodes = sorted(slots_by_node)
    used = {n: 0 for n in nodes}
    pi = [0] * P

    def rec(r):
        if r == P:
            yield tuple(pi)
            return
        for n in nodes:
            if used[n] < len(slots_by_node[n]):
                pi[r] = slots_by_node[n][used[n]]
                used[n] += 1
                yield from rec(r + 1)
                used[n] -= 1

    yield from rec(0)

