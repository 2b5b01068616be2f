"""Shared fixtures: the two-rank running example and random graph cases."""

import random
from pathlib import Path

import networkx as nx
import pytest

from latsense.costmodel import uniform
from latsense.frontend import generate_workload, parse_goal, random_dag
from latsense.graph import build_graph

DATA = Path(__file__).parent / "data"

US = 1e3  # ns per us


@pytest.fixture(scope="session")
def two_rank_program():
    return parse_goal((DATA / "two_rank.goal").read_text())


def running_example(c0_us: float = 0.1, L_us: float = 0.5, S=None):
    """The two-rank example with c0 configurable (1 us or 0.1 us), s = 4 B,
    o = 0 and G = 5 ns/byte."""
    prog = parse_goal((DATA / "two_rank.goal").read_text()
                      .replace("calc 100;", f"calc {round(c0_us * US)};"))
    model = uniform(L=L_us * US, o=0, G=5, S=S)
    return build_graph(prog, model.eager_threshold), model


def random_case(seed: int, max_ranks: int = 16, max_events: int = 400):
    """Random program plus a random cost model; about half the cases use the
    rendezvous protocol for part of the messages."""
    rng = random.Random(seed)
    P = rng.randint(1, max_ranks)
    prog = random_dag(P, rng.randint(1, max_events), seed=seed,
                      max_size=rng.choice([1, 16, 256]), max_calc=rng.choice([0, 500, 5000]),
                      p_branch=rng.random() * 0.5)
    S = rng.choice([None, None, 1, 8, 64])
    model = uniform(L=rng.uniform(0, 5000), o=rng.uniform(0, 200), G=rng.uniform(0, 2), S=S,
                    rv_fin_latency=rng.random() < 0.25)
    return build_graph(prog, model.eager_threshold), model


def workload_corpus():
    """Twenty deterministic workloads covering every generator pattern."""
    out = []
    for P in (4, 8, 16):
        out.append((f"halo2d-{P}", generate_workload("halo2d", P, 3, 256, 2000)))
        out.append((f"pipeline-{P}", generate_workload("pipeline", P, 4, 64, 1500)))
        for alg in ("recursive_doubling", "ring"):
            out.append((f"allreduce-{alg}-{P}",
                        generate_workload("allreduce_loop", P, 2, 128, 3000, algorithm=alg)))
    for seed in range(8):
        out.append((f"random-{seed}", random_dag(2 + seed, 150 + 40 * seed, seed=seed,
                                                 max_size=512, max_calc=4000, p_branch=0.3)))
    return out


def fat_tree_graph(k):
    """Standard k-ary fat tree: k pods of k/2 edge and k/2 aggregation
    switches, (k/2)^2 core switches, k/2 hosts per edge switch."""
    G = nx.Graph()
    half = k // 2
    for pod in range(k):
        for e in range(half):
            edge = ("edge", pod, e)
            for h in range(half):
                G.add_edge(("host", pod * half * half + e * half + h), edge)
            for a in range(half):
                G.add_edge(edge, ("agg", pod, a))
        for a in range(half):
            for c in range(half):
                G.add_edge(("agg", pod, a), ("core", a * half + c))
    return G


def dragonfly_graph(g, a, p):
    """Dragonfly realisation whose global links land on one gateway router
    per group: routers of a group are fully connected, and every router of
    group A links to the gateway of every other group B, which in turn is
    connected to all routers of B."""
    G = nx.Graph()
    for grp in range(g):
        routers = [("r", grp, i) for i in range(a)]
        for i, r in enumerate(routers):
            for h in range(p):
                G.add_edge(("host", (grp * a + i) * p + h), r)
            for r2 in routers[i + 1:]:
                G.add_edge(r, r2)
            G.add_edge(("gw", grp), r)
    for A in range(g):
        for B in range(g):
            if A != B:
                for i in range(a):
                    G.add_edge(("r", A, i), ("gw", B))
    return G
