import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import data_graphs
from egoagg.errors import GraphParseError, NodeNotFoundError, OutOfOrderWriteError, SelfLoopError
from egoagg.graph import (
    CountWindow,
    DataGraph,
    QuerySpec,
    TimeWindow,
    derive_bipartite,
    dump_graph,
    load_graph,
    neighborhood,
    parse_window,
    record_write,
)
from egoagg.running_example import EXAMPLE_READER_LISTS, example_edge_list
from oracles import nx_neighborhood, to_nx


def test_example_file_has_seven_nodes(example_g):
    assert len(example_g) == 7


def test_empty_file_gives_empty_graph():
    g = load_graph("")
    assert len(g) == 0 and g.num_arcs == 0


def test_duplicate_lines_collapse():
    g = load_graph("a\tb\na\tb\n")
    assert g.num_arcs == 1


def test_comments_and_blank_lines_are_skipped():
    g = load_graph("# header\n\na\tb\n  \n")
    assert g.num_arcs == 1


def test_malformed_line_reports_line_number():
    with pytest.raises(GraphParseError) as err:
        load_graph("a\tb\nbroken\n")
    assert err.value.lineno == 2


def test_self_loop_names_node():
    with pytest.raises(SelfLoopError) as err:
        load_graph("a\tb\nq\tq\n")
    assert err.value.node == "q" and err.value.lineno == 2


def test_bytes_input_and_undirected_lines():
    g = load_graph(b"a\tb\n", directed=False)
    a, b = g.node_id("a"), g.node_id("b")
    assert g.has_edge(a, b) and g.has_edge(b, a)


def test_dump_round_trip(example_g):
    again = load_graph(dump_graph(example_g))
    assert {(example_g.labels[u], example_g.labels[v]) for u, v in example_g.arcs()} == {
        (again.labels[u], again.labels[v]) for u, v in again.arcs()
    }


def test_example_neighbourhood_of_a(example_g):
    got = neighborhood(example_g, QuerySpec(), example_g.node_id("a"))
    assert {example_g.labels[v] for v in got} == {"c", "d", "e", "f"}


def test_isolated_node_has_no_neighbours():
    g = DataGraph()
    v = g.add_node("lonely")
    assert neighborhood(g, QuerySpec(), v) == set()


def test_unknown_node_is_not_found(example_g):
    with pytest.raises(NodeNotFoundError):
        neighborhood(example_g, QuerySpec(), 99)


@given(data_graphs(), st.integers(1, 3), st.sampled_from(["in", "out", "both"]))
def test_neighbourhood_matches_bfs_oracle(g, hops, direction):
    d = to_nx(g)
    q = QuerySpec(hops=hops, direction=direction)
    for v in g.alive:
        got = neighborhood(g, q, v)
        assert got == nx_neighborhood(d, v, hops, direction)
        assert v not in got


def test_writer_filter_uses_attribute_equality():
    g = DataGraph()
    a, b, c = g.add_node("a", team="red"), g.add_node("b", team="blue"), g.add_node("c")
    g.add_edge(a, c)
    g.add_edge(b, c)
    q = QuerySpec(writer_filter={"team": "red"})
    assert neighborhood(g, q, c) == {a}


def test_example_bipartite_matches_reader_lists(example_g):
    a = derive_bipartite(example_g, QuerySpec())
    for r, ws in a.inputs.items():
        expect = {w for w in EXAMPLE_READER_LISTS[example_g.labels[r]] if w != example_g.labels[r]}
        assert {example_g.labels[w] for w in ws} == expect
    # g is a reader but feeds nobody
    assert example_g.node_id("g") not in a.writers


def test_reader_predicate_selecting_nothing():
    g = load_graph(example_edge_list())
    a = derive_bipartite(g, QuerySpec(reader_pred=lambda gr, v: False))
    assert a.readers == frozenset() and a.num_edges == 0


def test_reader_predicate_by_attribute():
    g = DataGraph()
    x, y = g.add_node("x", role="r"), g.add_node("y")
    g.add_edge(y, x)
    g.add_edge(x, y)
    a = derive_bipartite(g, QuerySpec(reader_pred={"role": "r"}))
    assert a.readers == {x}


@given(data_graphs())
def test_one_hop_edge_count_equals_arc_count(g):
    a = derive_bipartite(g, QuerySpec())
    assert a.num_edges == g.num_arcs


@given(data_graphs(), st.integers(1, 2))
def test_bipartite_is_deterministic_and_matches_neighbourhoods(g, hops):
    q = QuerySpec(hops=hops)
    a1, a2 = derive_bipartite(g, q), derive_bipartite(g, q)
    assert a1.edges() == a2.edges()
    for r in a1.readers:
        assert a1.inputs[r] == neighborhood(g, q, r)


def test_record_write_keeps_order(example_g):
    a = example_g.node_id("a")
    record_write(example_g, a, 1.0, 1)
    record_write(example_g, a, 2.0, 4)
    assert [x for _, x in example_g.streams[a]] == [1, 4]


def test_record_write_rejects_unknown_and_out_of_order(example_g):
    with pytest.raises(NodeNotFoundError):
        record_write(example_g, 42, 0.0, 1)
    a = example_g.node_id("a")
    record_write(example_g, a, 5.0, 1)
    with pytest.raises(OutOfOrderWriteError):
        record_write(example_g, a, 4.0, 1)


def test_thousand_monotone_writes():
    g = DataGraph()
    v = g.add_node("v")
    for i in range(1000):
        record_write(g, v, float(i), i)
    assert len(g.streams[v]) == 1000


def test_window_parsing():
    assert parse_window("count:3") == CountWindow(3)
    assert parse_window("time:2.5") == TimeWindow(2.5)
    for bad in ("count:0", "time:-1", "sliding:4"):
        with pytest.raises(ValueError):
            parse_window(bad)


def test_query_rejects_zero_hops():
    with pytest.raises(ValueError):
        QuerySpec(hops=0)


def test_activity_must_be_non_negative(example_g):
    with pytest.raises(ValueError):
        example_g.set_activity(0, -1.0, 1.0)


def test_remove_node_drops_incident_arcs(example_g):
    c = example_g.node_id("c")
    example_g.remove_node(c)
    assert all(c not in (u, v) for u, v in example_g.arcs())
    with pytest.raises(NodeNotFoundError):
        example_g.node_id("c")
