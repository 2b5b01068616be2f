import pytest
from hypothesis import given, settings, strategies as st

from latsense.errors import ParseError, ScheduleError
from latsense.frontend import (COLLECTIVE_TAG_BASE, Calc, CollectiveAlgorithm, Recv, Send,
                               expand_collective, generate_workload, parse_goal, parse_trace,
                               random_dag, schedule_from_trace, serialize_goal,
                               serialize_trace)
from latsense.frontend.trace import TraceOp
from latsense.frontend.workloads import grid_shape
from latsense.graph import build_graph, validate

from conftest import DATA


# -- GOAL ------------------------------------------------------------------------

def test_goal_running_example(two_rank_program):
    p = two_rank_program
    assert p.num_ranks == 2
    assert [op.label for op in p.ranks[0]] == ["c0", "s", "c1"]
    assert p.ranks[0][1].kind == Send(4, 1, 0)
    assert p.ranks[1][1].kind == Recv(4, 0, 0)
    assert p.ranks[1][1].requires == ("c2",)
    assert p.count(Calc) == 4


def test_goal_roundtrip_is_canonical(two_rank_program):
    text = serialize_goal(two_rank_program)
    again = parse_goal(text)
    assert again == two_rank_program
    assert serialize_goal(again) == text


@pytest.mark.parametrize("src, msg", [
    ("rank 0 { a: calc 1; a: calc 2; }", "duplicate"),
    ("rank 0 { a: calc 1; a requires b; }", "undefined"),
    ("num_ranks 1\nrank 3 { a: calc 1; }", "rank"),
    ("rank 0 { a: calc 1; }\nrank 0 { b: calc 1; }", "rank"),
    ("rank 0 { a: jump 1; }", None),
    ("rank 0 { a: calc 1;", None),
])
def test_goal_errors(src, msg):
    with pytest.raises((ParseError, ScheduleError), match=msg):
        parse_goal(src)


def test_goal_error_reports_line():
    with pytest.raises(ParseError) as exc:
        parse_goal("rank 0 {\n a: calc 1;\n b: frob;\n}")
    assert exc.value.line == 3


def test_goal_infers_rank_count_from_peers():
    p = parse_goal("rank 0 { s: send 8b to 3; }")
    assert p.num_ranks == 4


def test_goal_cycle_rejected():
    with pytest.raises(ScheduleError, match="cycle"):
        parse_goal("rank 0 { a: calc 1; b: calc 1; a requires b; b requires a; }")


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 60), st.integers(0, 10_000))
def test_goal_roundtrip_random(P, events, seed):
    prog = random_dag(P, events, seed=seed)
    assert parse_goal(serialize_goal(prog)) == prog


# -- collectives -----------------------------------------------------------------

def _messages(prog):
    return prog.count(Send), prog.count(Recv)


@pytest.mark.parametrize("P", [2, 3, 4, 5, 8, 12, 16])
def test_recursive_doubling_message_count(P):
    pof2 = 1 << (P.bit_length() - 1)
    rounds = pof2.bit_length() - 1
    expected = pof2 * rounds + 2 * (P - pof2)
    prog = expand_collective(CollectiveAlgorithm.ALLREDUCE_RECURSIVE_DOUBLING, P, 64)
    assert _messages(prog) == (expected, expected)
    assert validate(build_graph(prog)) == []


@pytest.mark.parametrize("P", [2, 3, 7, 16])
def test_ring_message_count_and_chunk(P):
    prog = expand_collective(CollectiveAlgorithm.ALLREDUCE_RING, P, 100)
    n = 2 * (P - 1) * P
    assert _messages(prog) == (n, n)
    sizes = {op.kind.size for ops in prog.ranks for op in ops}
    assert sizes == {-(-100 // P)}


@pytest.mark.parametrize("alg", list(CollectiveAlgorithm))
@pytest.mark.parametrize("P", [1, 2, 5, 8])
def test_collectives_build_valid_graphs(alg, P):
    prog = expand_collective(alg, P, 32)
    g = build_graph(prog)
    assert validate(g) == []
    tags = {op.kind.tag for ops in prog.ranks for op in ops if not isinstance(op.kind, Calc)}
    assert all(t >= COLLECTIVE_TAG_BASE for t in tags)


def test_binomial_bcast_and_reduce_counts():
    for alg in (CollectiveAlgorithm.BCAST_BINOMIAL, CollectiveAlgorithm.REDUCE_BINOMIAL):
        assert _messages(expand_collective(alg, 11, 8)) == (10, 10)


def test_collective_parse_aliases():
    assert CollectiveAlgorithm.parse("ring") is CollectiveAlgorithm.ALLREDUCE_RING
    assert CollectiveAlgorithm.parse("RD") is CollectiveAlgorithm.ALLREDUCE_RECURSIVE_DOUBLING
    with pytest.raises(ScheduleError):
        CollectiveAlgorithm.parse("butterfly")
    with pytest.raises(ScheduleError):
        expand_collective(CollectiveAlgorithm.ALLREDUCE_RING, 0, 8)


# -- traces ----------------------------------------------------------------------

TRACE = """\
ranks 2
resolution_ns 10
0 Send 10 12 to 1 size 4 tag 0
0 Isend 20 21 to 1 size 8 tag 1 req 7
0 Wait 30 40 req 7
1 Recv 5 15 from 0 size 4 tag 0
1 Irecv 15 16 from 0 size 8 tag 1 req 3
1 Allreduce 50 60 size 16 comm 2
1 Wait 61 62 req 3
0 Allreduce 45 60 size 16 comm 2
"""


def test_trace_parse_and_roundtrip():
    t = parse_trace(TRACE)
    assert t.num_ranks == 2 and t.resolution_ns == 10
    assert [r.op for r in t.records[0]] == [TraceOp.SEND, TraceOp.ISEND, TraceOp.WAIT,
                                             TraceOp.ALLREDUCE]
    assert parse_trace(serialize_trace(t)) == t


def test_trace_to_schedule_gaps_and_requests():
    prog = schedule_from_trace(parse_trace(TRACE))
    r0 = prog.ranks[0]
    # first call at tick 10 -> 100 ns of computation before it
    assert r0[0].kind == Calc(100)
    assert isinstance(r0[1].kind, Send)
    # gap 12 -> 20 ticks
    assert r0[2].kind == Calc(80)
    isend = r0[3]
    assert isend.kind == Send(8, 1, 1)
    # ops after the Wait depend on the nonblocking send
    later = [op for op in r0[4:] if isend.label in op.requires]
    assert later
    g = build_graph(prog)
    assert validate(g) == []


@pytest.mark.parametrize("bad, msg", [
    ("0 Send 10 5 to 1 size 4", "t_end"),
    ("0 Wait 1 2 req 9", "unknown request"),
    ("0 Frob 1 2", "unknown op"),
    ("0 Send 1 2 size 4", "needs 'to"),
    ("0 Allreduce 1 2 size 4", "comm"),
    ("ranks 1\n3 Send 1 2 to 0 size 1", "outside"),
])
def test_trace_errors(bad, msg):
    with pytest.raises((ParseError, ScheduleError), match=msg):
        parse_trace(bad)


def test_trace_unwaited_request_rejected():
    with pytest.raises(ScheduleError, match="never completed"):
        schedule_from_trace(parse_trace("0 Isend 1 2 to 1 size 4 req 1\n1 Recv 1 2 from 0 size 4"))


def test_trace_negative_gap_clamped(caplog):
    t = parse_trace("0 Send 10 30 to 1 size 1\n0 Send 20 40 to 1 size 1 tag 1\n"
                    "1 Recv 0 1 from 0 size 1\n1 Recv 2 3 from 0 size 1 tag 1")
    prog = schedule_from_trace(t)
    assert "clamped" in caplog.text
    assert prog.count(Calc) == 2    # one leading gap per rank, none for the overlap


# -- workloads -------------------------------------------------------------------

@pytest.mark.parametrize("pattern", ["halo2d", "allreduce_loop", "pipeline", "random_dag"])
def test_workloads_are_valid_and_deterministic(pattern):
    a = generate_workload(pattern, 6, iterations=2, seed=3)
    b = generate_workload(pattern, 6, iterations=2, seed=3)
    assert a == b
    assert validate(build_graph(a)) == []


def test_pipeline_two_ranks_matches_running_example_shape():
    p = generate_workload("pipeline", 2, iterations=1, msg_size=4)
    kinds0 = [type(op.kind).__name__ for op in p.ranks[0]]
    kinds1 = [type(op.kind).__name__ for op in p.ranks[1]]
    assert kinds0 == ["Calc", "Send", "Calc"]
    assert kinds1 == ["Calc", "Recv", "Calc"]


def test_halo_grid_shape():
    assert grid_shape(12) == (3, 4)
    with pytest.raises(ScheduleError):
        grid_shape(7)
    with pytest.raises(ScheduleError):
        generate_workload("mesh", 4)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 16), st.integers(0, 300), st.integers(0, 2**31))
def test_random_dag_always_builds_acyclic_graph(P, n, seed):
    g = build_graph(random_dag(P, n, seed=seed))
    assert len(g.topo_order) == len(g)
