import itertools
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from latsense.costmodel import uniform
from latsense.engine import build_lp, evaluate, makespan
from latsense.errors import DeadlockError, ModelError
from latsense.frontend import parse_goal
from latsense.graph import Edge, EdgeKind, ExecutionGraph, Vertex, VertexKind, build_graph
from latsense.oracle import MAX_VERTICES, PiecewiseLinear, dp_breakpoints, simulate

from conftest import random_case, running_example


def test_simulate_running_example():
    g, m = running_example()
    res = simulate(g, m)
    assert res.makespan == pytest.approx(1615)
    assert res.start[4] == pytest.approx(615)
    assert res.events >= len(g.vertices) * 2
    csv = res.timeline_csv(g).splitlines()
    assert csv[0] == "vertex_id,rank,kind,t_start_ns,t_end_ns"
    assert len(csv) == len(g.vertices) + 1


def test_simulate_rendezvous_matches_evaluate():
    for fin in (False, True):
        g, m = running_example(S=1)
        m = type(m)(m.params, rv_fin_latency=fin)
        assert simulate(g, m).makespan == pytest.approx(evaluate(g, m)["makespan"])


def test_simulate_bindings_override():
    g, m = running_example()
    assert simulate(g, m, {"l": 200}).makespan == pytest.approx(1500)


def test_deadlock_detected():
    vs = [Vertex(0, 0, VertexKind.CALC, cost=1), Vertex(1, 0, VertexKind.CALC, cost=1)]
    es = [Edge(0, 1, EdgeKind.LOCAL), Edge(1, 0, EdgeKind.LOCAL)]
    with pytest.raises(DeadlockError) as info:
        simulate(ExecutionGraph(1, vs, es), uniform())
    assert info.value.stuck == [0, 1]


def test_negative_cost_rejected():
    g, m = running_example()
    with pytest.raises(ModelError):
        simulate(g, m, {"l": -5000})


def test_strict_gap_only_delays():
    prog = parse_goal("rank 0 { a: send 1b to 1; b: send 1b to 1; }\n"
                      "rank 1 { x: recv 1b from 0; y: recv 1b from 0; }")
    g = build_graph(prog)
    m = uniform(L=100, o=0, g=50, G=0)
    loose = simulate(g, m)
    strict = simulate(g, m, strict_g=True)
    assert loose.makespan == pytest.approx(100)
    assert strict.makespan == pytest.approx(150)
    assert strict.makespan >= loose.makespan


def test_empty_graph():
    res = simulate(build_graph(parse_goal("")), uniform())
    assert res.makespan == 0 and res.events == 0


# -- DP envelope -----------------------------------------------------------------

def test_dp_running_example():
    g, m = running_example()
    env = dp_breakpoints(g, m)
    assert env.lines == ((0.0, 1500.0), (1.0, 1115.0))
    assert env.breakpoints == pytest.approx((385.0,))
    assert env(500) == pytest.approx(1615)
    assert env.slope(385) == 1.0 and env.slope(384.9) == 0.0
    assert env.breakpoints_in(0, 100) == []


def test_dp_bandwidth_symbol():
    g, m = running_example()
    env = dp_breakpoints(g, m, symbol="g_bw")
    assert env(5) == pytest.approx(1615)
    assert env.slope(5) == 3.0
    with pytest.raises(ModelError):
        dp_breakpoints(g, m, symbol="nope")


def test_dp_size_guard():
    g, m = running_example()
    with pytest.raises(ModelError):
        dp_breakpoints(g, m, max_vertices=3)
    assert MAX_VERTICES == 50_000


def test_envelope_of_no_lines():
    env = PiecewiseLinear.envelope([])
    assert env(3) == 0 and env.slope(3) == 0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(-50, 50)), min_size=1, max_size=12),
       st.floats(0, 20))
def test_envelope_equals_max_of_lines(lines, x):
    # envelopes are taken over non-negative arguments
    env = PiecewiseLinear.envelope(lines)
    assert env(x) == pytest.approx(max(a * x + c for a, c in lines))
    slopes = [a for a, _ in env.lines]
    assert slopes == sorted(set(slopes))
    assert list(env.breakpoints) == sorted(env.breakpoints)


def _all_paths(g, m, symbol):
    """Brute force over every source-to-sink path (small graphs only)."""
    b = m.bindings()
    out = []

    def walk(v, a, c):
        vc = m.vertex_cost(g.vertices[v])
        a2, c2 = a + vc.coef(symbol), c + vc.value({**b, symbol: 0})
        if not g.succs[v]:
            out.append((a2, c2))
        for w, e in g.succs[v]:
            ec = m.edge_cost(g, e)
            walk(w, a2 + ec.coef(symbol), c2 + ec.value({**b, symbol: 0}))

    for v in g.vertices:
        rel = m.release(g, v)
        if rel is not None:
            walk(v.id, rel.coef(symbol), rel.value({**b, symbol: 0}))
        elif not g.preds[v.id]:
            walk(v.id, 0.0, 0.0)
    return out


@pytest.mark.parametrize("seed", range(30))
def test_dp_matches_path_enumeration(seed):
    g, m = random_case(seed, max_ranks=4, max_events=14)
    env = dp_breakpoints(g, m)
    paths = _all_paths(g, m, "l")
    for x in (0.0, 1.0, 100.0, m.params.L, 1e4, 1e6):
        assert env(x) == pytest.approx(max(a * x + c for a, c in paths), rel=1e-9, abs=1e-6)


@pytest.mark.parametrize("seed", range(30))
def test_dp_agrees_with_lp_and_simulator(seed):
    g, m = random_case(seed, max_events=300)
    env = dp_breakpoints(g, m)
    lp = build_lp(g, m)
    rng = random.Random(seed)
    for x in [rng.uniform(0, 2e4) for _ in range(5)]:
        T = makespan(lp, {"l": x})
        assert env(x) == pytest.approx(T, rel=1e-9, abs=1e-6)
        assert simulate(g, m, {"l": x}).makespan == pytest.approx(T, rel=1e-9, abs=1e-6)
