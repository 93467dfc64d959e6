import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egoagg.aggregates import get_aggregate
from egoagg.dataflow import plan_violations
from egoagg.errors import NodeNotFoundError, StructuralError
from egoagg.graph import DataGraph, QuerySpec, derive_bipartite, load_graph
from egoagg.maintain import (
    EDGE_ADD,
    EDGE_DEL,
    NODE_ADD,
    NODE_DEL,
    Maintainer,
    ReaderDelta,
    StructureUpdate,
    affected_readers,
    apply_update,
)
from egoagg.overlay import PULL, PUSH, all_coverage, orphans, reader_id, validate, writer_id
from egoagg.pipeline import compile_query
from egoagg.workload import copying_graph, gen_structure_updates, random_graph
from oracles import nx_neighborhood, to_nx

SUM = get_aggregate("sum").caps


def _lab(g, xs):
    return {g.labels[x] for x in xs}


def _chain():
    return load_graph("a\tb\nb\tc\nc\td\nx\ty\n")


def _check(m: Maintainer):
    """Overlay coverage equals neighbourhoods re-derived from the graph."""
    a = derive_bipartite(m.g, m.q)
    assert validate(m.o, a, SUM) == []
    assert orphans(m.o) == []
    assert plan_violations(m.o, m.o.decisions) == []
    cov = all_coverage(m.o)
    for r, ws in a.inputs.items():
        assert dict(cov[reader_id(r)]) == dict.fromkeys(ws, 1)


# -- deltas ----------------------------------------------------------------------------

def test_one_hop_edge_add():
    g = _chain()
    got = affected_readers(g, QuerySpec(), StructureUpdate(EDGE_ADD, "x", "d"))
    assert got == [ReaderDelta(g.node_id("d"), frozenset({g.node_id("x")}))]


def test_two_hop_edge_add_reaches_downstream():
    g = _chain()
    got = {g.labels[d.reader]: _lab(g, d.added) for d in
           affected_readers(g, QuerySpec(hops=2), StructureUpdate(EDGE_ADD, "y", "b"))}
    assert got == {"b": {"x", "y"}, "c": {"y"}}


def test_delete_only_edge():
    g = _chain()
    got = affected_readers(g, QuerySpec(), StructureUpdate(EDGE_DEL, "x", "y"))
    assert got == [ReaderDelta(g.node_id("y"), removed=frozenset({g.node_id("x")}))]


def test_update_validation():
    with pytest.raises(ValueError):
        StructureUpdate("rename", "a")
    with pytest.raises(ValueError):
        StructureUpdate(EDGE_ADD, "a")
    g = _chain()
    with pytest.raises(StructuralError):
        affected_readers(g, QuerySpec(), StructureUpdate(NODE_ADD, "a"))
    with pytest.raises(NodeNotFoundError):
        affected_readers(g, QuerySpec(), StructureUpdate(NODE_ADD, "n", edges=(("zz", "n"),)))


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.integers(1, 3), st.sampled_from(["in", "out", "both"]))
def test_deltas_match_bfs_oracle(seed, hops, direction):
    g = random_graph(25, 2.5, seed=seed)
    q = QuerySpec(hops=hops, direction=direction)
    for ev in gen_structure_updates(g, 12, seed=seed):
        u = ev.to_update()
        before = to_nx(g)
        deltas = {d.reader: d for d in affected_readers(g, q, u)}
        from egoagg.maintain import _apply_structure

        _apply_structure(g, u)
        after = to_nx(g)
        for r in g.alive:
            old = nx_neighborhood(before, r, hops, direction) if r in before else set()
            new = nx_neighborhood(after, r, hops, direction)
            d = deltas.get(r)
            if r not in before:
                assert d is not None and d.added == frozenset(new)
            elif old == new:
                assert d is None
            else:
                assert (d.added, d.removed) == (frozenset(new - old), frozenset(old - new))


# -- applying deltas ---------------------------------------------------------------------

def _maintainer(g, q=QuerySpec(), algo="iob", **kw):
    c = compile_query(g, q, algo)
    return Maintainer(c.g, c.q, c.o, **kw)


def test_small_addition_is_a_direct_edge():
    m = _maintainer(_chain())
    m.apply(StructureUpdate(EDGE_ADD, "x", "d"))
    g = m.g
    assert m.o.has_edge(writer_id(g.node_id("x")), reader_id(g.node_id("d")))
    assert m.stats.direct_edges == 1 and m.direct[g.node_id("d")] == 1
    _check(m)


def test_large_addition_gets_its_own_aggregator():
    g = load_graph("".join(f"s{i}\thub\n" for i in range(20)))
    m = _maintainer(g)
    edges = tuple((f"s{i}", "fresh") for i in range(20))
    m.apply(StructureUpdate(NODE_ADD, "fresh", edges=edges))
    rid = reader_id(m.g.node_id("fresh"))
    (agg,) = m.o.inputs[rid]
    assert agg % 3 == 2 and m.stats.new_aggregators == 1
    assert len(all_coverage(m.o)[agg]) == 20
    _check(m)


def test_too_many_direct_edges_trigger_restructure():
    m = _maintainer(load_graph("a\tr\n"), threshold=3)
    for i in range(4):
        m.apply(StructureUpdate(NODE_ADD, f"n{i}", edges=((f"n{i}", "r"),)))
    assert m.stats.restructures == 1
    _check(m)


def test_direct_writer_deletion_drops_the_edge():
    m = _maintainer(_chain())
    m.apply(StructureUpdate(EDGE_DEL, "x", "y"))
    assert m.o.inputs[reader_id(m.g.node_id("y"))] == {}
    _check(m)


def test_private_aggregator_is_trimmed():
    # three readers share {s0..s4}; cutting s0 from r0 splits the shared node
    lines = "".join(f"s{i}\tr{j}\n" for i in range(5) for j in range(3))
    m = _maintainer(load_graph(lines))
    assert m.o.partials()
    m.apply(StructureUpdate(EDGE_DEL, "s0", "r0"))
    assert m.stats.splits == 1 and m.stats.rebuilds == 0
    _check(m)


def test_writer_spread_over_many_aggregators_forces_rebuild():
    # r sits under a ten-deep chain of aggregators that all carry w
    g = load_graph("w\tr\n" + "".join(f"a{k}\tr\n" for k in range(10)))
    q = QuerySpec()
    c = compile_query(g, q, "trivial")
    o = c.o
    rid = reader_id(g.node_id("r"))
    for u in list(o.inputs[rid]):
        o.remove_edge(u, rid)
    below = writer_id(g.node_id("w"))
    for k in range(10):
        p = o.add_partial()
        o.add_edge(below, p)
        o.add_edge(writer_id(g.node_id(f"a{k}")), p)
        below = p
    o.add_edge(below, rid)
    m = Maintainer(g, q, o)
    _check(m)
    assert len(m._carriers(rid, frozenset({g.node_id("w")}))) == 10
    m.apply(StructureUpdate(EDGE_DEL, "w", "r"))
    assert m.stats.rebuilds == 1 and m.stats.splits == 0
    _check(m)


def test_isolated_node_adds_only_a_writer():
    m = _maintainer(_chain())
    before = m.o.num_edges
    m.apply(StructureUpdate(NODE_ADD, "solo"))
    v = m.g.node_id("solo")
    assert writer_id(v) in m.o and m.o.num_edges == before
    assert m.o.inputs[reader_id(v)] == {}
    _check(m)


def test_delete_example_g_keeps_other_readers(example_g):
    m = _maintainer(example_g)
    keep = {r: dict(c) for r, c in all_coverage(m.o).items() if r % 3 == 1 and example_g.labels[r // 3] != "g"}
    m.apply(StructureUpdate(NODE_DEL, "g"))
    g_id = example_g.ids["g"]
    assert reader_id(g_id) not in m.o and writer_id(g_id) not in m.o
    after = all_coverage(m.o)
    assert {r: dict(after[r]) for r in keep} == keep
    _check(m)


def test_delete_node_removes_both_roles():
    m = _maintainer(_chain())
    m.apply(StructureUpdate(NODE_DEL, "b"))
    b = m.g.ids["b"]
    assert writer_id(b) not in m.o and reader_id(b) not in m.o
    assert m.o.inputs[reader_id(m.g.node_id("c"))] == {}
    _check(m)
    with pytest.raises(NodeNotFoundError):
        m.apply(StructureUpdate(NODE_DEL, "nobody"))


def test_new_nodes_take_neighbour_consistent_decisions():
    g = load_graph("".join(f"s{i}\thub\n" for i in range(3)))
    c = compile_query(g, QuerySpec(), "iob")
    for n in c.o.nodes:
        c.o.decisions[n] = PUSH
    m = Maintainer(c.g, c.q, c.o)
    m.apply(StructureUpdate(NODE_ADD, "fresh", edges=tuple((f"s{i}", "fresh") for i in range(3))))
    fresh = reader_id(m.g.node_id("fresh"))
    assert m.o.decisions[fresh] == PULL  # a new reader starts as pull
    m.apply(StructureUpdate(NODE_ADD, "big", edges=tuple((f"s{i % 3}" if i < 3 else "hub", "big") for i in range(4))))
    assert plan_violations(m.o, m.o.decisions) == []


@pytest.mark.parametrize("algo, hops, seed", [("iob", 1, 0), ("iob", 2, 1), ("vnma", 1, 2), ("trivial", 2, 3), ("vnmn", 1, 4)])
def test_random_update_sequences(algo, hops, seed):
    g = random_graph(60, 3, seed=seed)
    m = _maintainer(g, QuerySpec(hops=hops), algo)
    for ev in gen_structure_updates(g.copy(), 200, seed=seed):
        m.apply(ev.to_update())
    _check(m)


def test_maintained_equals_rebuilt_coverage():
    g = copying_graph(150, seed=1)
    q = QuerySpec(direction="out")
    m = _maintainer(g, q)
    for ev in gen_structure_updates(g.copy(), 150, seed=7):
        apply_update(m.g, q, m.o, ev.to_update(), maintainer=m)
    fresh = compile_query(m.g.copy(), q, "iob").o
    mine, theirs = all_coverage(m.o), all_coverage(fresh)
    for r in (n for n in fresh.nodes if n % 3 == 1):
        assert dict(mine[r]) == dict(theirs[r])
