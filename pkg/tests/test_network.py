import numpy as np
import pytest

from phgasnet.errors import GraphError
from phgasnet.gas import PipeParams
from phgasnet.network import (Edge, classify_nodes, coupling_entries, coupling_matrix, flow_sets, incidence,
                              make_graph)

P = PipeParams()


def fig4_graph():
    return make_graph(["v1", "v2", "v3", "v4"],
                      [Edge("w1", "v1", "v2", P, 10), Edge("w2", "v2", "v3", P, 10), Edge("w3", "v2", "v4", P, 10)])


def diamond_graph():
    E = [("w1", "v1", "v2"), ("w2", "v2", "v3"), ("w3", "v2", "v4"), ("w4", "v3", "v5"), ("w5", "v4", "v5"),
         ("w6", "v5", "v6")]
    return make_graph([f"v{i}" for i in range(1, 7)], [Edge(a, b, c, P, 10) for a, b, c in E])


def test_node_classes():
    g = fig4_graph()
    assert set(g.boundary_nodes) == {"v1", "v3", "v4"}
    assert g.interior_nodes == ("v2",)
    assert diamond_graph().interior_nodes == ("v2", "v3", "v4", "v5")
    single = make_graph(["a", "b"], [Edge("p", "a", "b", P, 4)])
    assert set(single.boundary_nodes) == {"a", "b"}


def test_incidence():
    g = fig4_graph()
    assert incidence("v1", "w1", g) == 1.0
    assert incidence("v2", "w1", g) == -1.0
    assert incidence("v3", "w1", g) == 0.0
    g2 = make_graph(["a", "b"], [Edge("p", "a", "b", PipeParams(A=2.0), 4)])
    assert incidence("b", "p", g2) == -2.0
    with pytest.raises(GraphError):
        incidence("zz", "w1", g)
    with pytest.raises(GraphError):
        incidence("v1", "nope", g)


def test_flow_sets():
    fs = flow_sets(diamond_graph())
    assert fs.inflow["v2"] == (0,)
    assert fs.outflow["v2"] == (1, 2)
    assert fs.inflow["v5"] == (3, 4)


def test_sink_node_rejected():
    g = make_graph(["a", "b", "c"], [Edge("p", "a", "b", P, 4), Edge("q", "c", "b", P, 4)])
    with pytest.raises(GraphError):
        flow_sets(g)


def test_coupling_matrix():
    assert np.array_equal(coupling_matrix(fig4_graph()), [[1.0, 1.0, 1.0]])
    C = coupling_matrix(diamond_graph())
    assert C.shape == (4, 10)
    assert list(C.sum(axis=1)) == [3, 2, 2, 3]
    # entries grouped per node: contiguous blocks of ones
    for i, row in enumerate(C):
        nz = np.flatnonzero(row)
        assert np.all(np.diff(nz) == 1)
    chain = make_graph(["a", "b", "c"], [Edge("p", "a", "b", P, 4), Edge("q", "b", "c", P, 4)])
    assert np.array_equal(coupling_matrix(chain), [[1.0, 1.0]])
    assert len(coupling_entries(chain)) == 2


def test_invalid_graphs():
    with pytest.raises(GraphError):
        make_graph([], [])
    with pytest.raises(GraphError):
        make_graph(["a", "b", "c"], [Edge("p", "a", "b", P, 4)])  # isolated node
    with pytest.raises(GraphError):
        make_graph(["a", "b", "c", "d"], [Edge("p", "a", "b", P, 4), Edge("q", "c", "d", P, 4)])
    with pytest.raises(GraphError):
        make_graph(["a", "b"], [Edge("p", "a", "x", P, 4)])


def test_classify_nodes_matches_graph():
    g = diamond_graph()
    interior, boundary = classify_nodes(g)
    assert interior == g.interior_nodes and boundary == g.boundary_nodes
