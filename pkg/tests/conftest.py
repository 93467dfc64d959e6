import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from egoagg.graph import DataGraph  # noqa: E402
from egoagg.running_example import example_bipartite, example_graph, example_overlay  # noqa: E402

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@st.composite
def data_graphs(draw, min_nodes=2, max_nodes=14, max_edges=40):
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = draw(
        st.lists(
            st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda p: p[0] != p[1]),
            max_size=max_edges,
        )
    )
    g = DataGraph()
    for v in range(n):
        g.add_node(str(v))
    for u, v in pairs:
        g.add_edge(u, v)
    return g


@pytest.fixture
def example_g():
    return example_graph()


@pytest.fixture
def example_a():
    return example_bipartite()


@pytest.fixture
def example_o():
    return example_overlay()


@st.composite
def bipartite_graphs(draw, max_writers=10, max_readers=10):
    """Random writer/reader incidence; reader ids start after the writers."""
    from egoagg.graph import BipartiteGraph

    nw = draw(st.integers(1, max_writers))
    nr = draw(st.integers(1, max_readers))
    inputs = {
        nw + r: frozenset(draw(st.sets(st.integers(0, nw - 1), max_size=nw)))
        for r in range(nr)
    }
    return BipartiteGraph(inputs)
