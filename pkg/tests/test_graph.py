import pytest

from latsense.errors import GraphError
from latsense.frontend import Calc, Recv, Send, parse_goal
from latsense.frontend.program import RankBuilder, build_program
from latsense.graph import (Edge, EdgeKind, ExecutionGraph, Vertex, VertexKind, build_graph,
                            find_cycles, validate)


def test_running_example_structure(two_rank_program):
    g = build_graph(two_rank_program)
    assert g.stats() == {"ranks": 2, "vertices": 6, "edges": 5, "comm_edges": 1,
                         "virtual_edges": 0}
    # ids follow (rank, position)
    assert [(v.rank, v.label) for v in g.vertices] == [
        (0, "c0"), (0, "s"), (0, "c1"), (1, "c2"), (1, "r"), (1, "c3")]
    assert g.match == {1: 4, 4: 1}
    assert g.sinks == (2, 5)
    assert validate(g) == []


def test_rendezvous_adds_virtual_edges(two_rank_program):
    g = build_graph(two_rank_program, eager_threshold=4)
    assert all(v.rendezvous for v in g.vertices if v.kind is not VertexKind.CALC)
    # the receive's local predecessor c2 gates the send
    assert g.virtual_pairs == {(3, 1)}
    g8 = build_graph(two_rank_program, eager_threshold=8)
    assert not any(v.rendezvous for v in g8.vertices)
    assert g8.count_edges(EdgeKind.VIRTUAL) == 0


def test_fifo_matching_per_tag():
    b0, b1 = RankBuilder(), RankBuilder()
    b0.add(Send(1, 1, 0))
    b0.add(Send(2, 1, 5))
    b0.add(Send(3, 1, 0))
    b1.add(Recv(2, 0, 5))
    b1.add(Recv(1, 0, 0))
    b1.add(Recv(3, 0, 0))
    g = build_graph(build_program([b0, b1]))
    pairs = {(g.vertices[s].size, g.vertices[r].size) for s, r in g.match.items()
             if g.vertices[s].kind is VertexKind.SEND}
    assert pairs == {(1, 1), (2, 2), (3, 3)}


def test_unmatched_and_size_mismatch_reported():
    with pytest.raises(GraphError, match="unmatched send"):
        build_graph(parse_goal("rank 0 { s: send 4b to 1; }\nrank 1 { }"))
    with pytest.raises(GraphError, match="size mismatch"):
        build_graph(parse_goal("rank 0 { s: send 4b to 1; }\nrank 1 { r: recv 8b from 0; }"))


def test_cross_rank_deadlock_detected():
    src = """
    rank 0 { r: recv 1b from 1; s: send 1b to 1; s requires r; }
    rank 1 { r: recv 1b from 0; s: send 1b to 0; s requires r; }
    """
    with pytest.raises(GraphError, match="cycle"):
        build_graph(parse_goal(src))


def test_validate_catches_hand_built_defects():
    V = [Vertex(0, 0, VertexKind.SEND, size=4, peer=1), Vertex(1, 0, VertexKind.RECV, size=8,
                                                               peer=1),
         Vertex(2, 1, VertexKind.CALC, cost=5)]
    E = [Edge(0, 1, EdgeKind.COMM), Edge(2, 0, EdgeKind.LOCAL), Edge(2, 0, EdgeKind.VIRTUAL)]
    codes = {d.code for d in validate(ExecutionGraph(2, V, E))}
    assert {"comm-rank", "size-mismatch", "local-rank", "virtual-target"} <= codes


def test_find_cycles_on_hand_built_graph():
    V = [Vertex(i, 0, VertexKind.CALC, cost=1) for i in range(3)]
    E = [Edge(0, 1, EdgeKind.LOCAL), Edge(1, 2, EdgeKind.LOCAL), Edge(2, 1, EdgeKind.LOCAL)]
    g = ExecutionGraph(1, V, E)
    assert find_cycles(g) == [[1, 2]]
    with pytest.raises(GraphError):
        g.topo_order
    assert any(d.code == "cycle" for d in validate(g))


def test_dot_labels(two_rank_program):
    dot = build_graph(two_rank_program).to_dot()
    assert '"0:calc:100"' in dot and '"0:send:4"' in dot and "style=bold" in dot


def test_graph_equality_and_hash(two_rank_program):
    a, b = build_graph(two_rank_program), build_graph(two_rank_program)
    assert a == b and hash(a) == hash(b)
    assert a != build_graph(two_rank_program, eager_threshold=1)


def test_empty_program():
    g = build_graph(build_program([RankBuilder(), RankBuilder()]))
    assert len(g) == 0 and g.sinks == () and validate(g) == []
    g1 = build_graph(build_program([RankBuilder()]))
    assert g1.topo_order == ()
    b = RankBuilder()
    b.add(Calc(7))
    assert build_graph(build_program([b])).sinks == (0,)
