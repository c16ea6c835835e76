"""Directed pipe-network topology: incidence, node classes, flow sets, coupling matrix."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import AssemblyError, GraphError
from .gas import PipeParams


@dataclass(frozen=True)
class Edge:
    name: str
    tail: str
    head: str
    params: PipeParams
    n: int
    hint: int = 1
    friction_in_energy: bool = True
    cooling: bool = True


@dataclass(frozen=True)
class CouplingEntry:
    """One entry of u_0: the boundary flow of ``edge`` at interior ``node``."""

    node: str
    edge: int
    end: str  # "tail" (x=0) or "head" (x=L)


@dataclass(frozen=True)
class NodeFlowSets:
    inflow: dict
    outflow: dict


@dataclass
class NetworkGraph:
    """Immutable directed graph of pipes. Build with :func:`make_graph`."""

    nodes: tuple
    edges: tuple
    boundary_nodes: tuple = field(default=())
    interior_nodes: tuple = field(default=())

    def edge_index(self, name: str) -> int:
        for k, e in enumerate(self.edges):
            if e.name == name:
                return k
        raise GraphError(f"unknown edge {name!r}")

    def adjacent(self, node: str) -> list:
        if node not in self.nodes:
            raise GraphError(f"unknown node {node!r}")
        return [k for k, e in enumerate(self.edges) if node in (e.tail, e.head)]

    @property
    def n_total(self) -> int:
        return sum(e.n for e in self.edges)


def make_graph(nodes, edges) -> NetworkGraph:
    nodes = tuple(nodes)
    edges = tuple(edges)
    if not nodes:
        raise GraphError("network has no nodes")
    if not edges:
        raise GraphError("network has no edges")
    if len(set(nodes)) != len(nodes):
        raise GraphError("duplicate node identifiers")
    if len({e.name for e in edges}) != len(edges):
        raise GraphError("duplicate edge identifiers")
    for e in edges:
        for v in (e.tail, e.head):
            if v not in nodes:
                raise GraphError(f"edge {e.name!r} references unknown node {v!r}")
        if e.tail == e.head:
            raise GraphError(f"edge {e.name!r} is a self-loop")
        if e.n < 2:
            raise GraphError(f"edge {e.name!r} needs at least 2 elements")
    g = NetworkGraph(nodes, edges)
    n0, nb = classify_nodes(g)
    g.interior_nodes, g.boundary_nodes = n0, nb
    _check_connected(g)
    return g


def _check_connected(g: NetworkGraph):
    nbrs = {v: set() for v in g.nodes}
    for e in g.edges:
        nbrs[e.tail].add(e.head)
        nbrs[e.head].add(e.tail)
    seen = {g.nodes[0]}
    todo = deque([g.nodes[0]])
    while todo:
        v = todo.popleft()
        for w in nbrs[v] - seen:
            seen.add(w)
            todo.append(w)
    missing = [v for v in g.nodes if v not in seen]
    if missing:
        raise GraphError(f"network is not connected; unreachable nodes {missing}")


def incidence(node: str, edge, g: NetworkGraph) -> float:
    """Area-weighted incidence: +A if the edge leaves ``node``, -A if it enters, else 0."""
    k = edge if isinstance(edge, (int, np.integer)) else g.edge_index(edge)
    if node not in g.nodes:
        raise GraphError(f"unknown node {node!r}")
    if not 0 <= k < len(g.edges):
        raise GraphError(f"unknown edge index {k}")
    e = g.edges[k]
    if e.tail == node:
        return e.params.A
    if e.head == node:
        return -e.params.A
    return 0.0


def classify_nodes(g: NetworkGraph):
    """Return ``(interior, boundary)`` node tuples; boundary nodes have degree one."""
    deg = {v: 0 for v in g.nodes}
    for e in g.edges:
        deg[e.tail] += 1
        deg[e.head] += 1
    isolated = [v for v, d in deg.items() if d == 0]
    if isolated:
        raise GraphError(f"isolated nodes {isolated}")
    interior = tuple(v for v in g.nodes if deg[v] > 1)
    boundary = tuple(v for v in g.nodes if deg[v] == 1)
    return interior, boundary


def flow_sets(g: NetworkGraph, hints=None) -> NodeFlowSets:
    """Split the pipes at each interior node into inflow and outflow sets.

    ``hints`` maps edge index to +1 (flow along the edge) or -1; defaults to the
    hints stored on the edges.
    """
    if hints is None:
        hints = [e.hint for e in g.edges]
    inflow, outflow = {}, {}
    for v in g.interior_nodes:
        ins, outs = [], []
        for k in g.adjacent(v):
            e = g.edges[k]
            if hints[k] not in (1, -1):
                raise GraphError(f"flow hint of edge {e.name!r} must be +1 or -1")
            leaves = e.tail == v
            if leaves == (hints[k] > 0):
                outs.append(k)
            else:
                ins.append(k)
        if not ins or not outs:
            raise GraphError(f"interior node {v!r} has no incoming or no outgoing pipe")
        inflow[v], outflow[v] = tuple(ins), tuple(outs)
    return NodeFlowSets(inflow, outflow)


def coupling_entries(g: NetworkGraph) -> list:
    """u_0 ordering: interior nodes in order, adjacent edges in edge-list order."""
    out = []
    for v in g.interior_nodes:
        for k in g.adjacent(v):
            out.append(CouplingEntry(v, k, "tail" if g.edges[k].tail == v else "head"))
    return out


def coupling_matrix(g: NetworkGraph, entries=None) -> np.ndarray:
    if entries is None:
        entries = coupling_entries(g)
    node_pos = {v: i for i, v in enumerate(g.interior_nodes)}
    C = np.zeros((len(g.interior_nodes), len(entries)))
    last = -1
    for k, ent in enumerate(entries):
        if ent.node not in node_pos:
            raise AssemblyError(f"u0 entry {k} lives on non-interior node {ent.node!r}")
        e = g.edges[ent.edge]
        if ent.node not in (e.tail, e.head):
            raise AssemblyError(f"u0 entry {k}: edge {e.name!r} is not adjacent to {ent.node!r}")
        if node_pos[ent.node] < last:
            raise AssemblyError("u0 entries are not grouped by interior node")
        last = node_pos[ent.node]
        C[node_pos[ent.node], k] = 1.0
    return C
