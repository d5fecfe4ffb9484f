"""Node-labeled lattice data model: validation, traversals, transforms.

A lattice here is a directed acyclic graph with a unique start node, a
unique end node, and per-edge transition probabilities that sum to one
over every node's outgoing edges. The token sequences it encodes are its
*complete paths* (start to end); construction validates that every node
lies on at least one complete path, so path probabilities always form a
proper distribution.

All structures are immutable after construction and safe to share
between threads.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Sequence

NodeId = int

START_TOKEN = "<s>"
END_TOKEN = "</s>"

# Sums of outgoing transition probabilities must hit 1 within this.
NORMALIZATION_ATOL = 1e-9


class LatticeError(ValueError):
    """Base class for lattice parsing and construction failures."""


class LatticeSyntaxError(LatticeError):
    """Malformed lattice text; carries 1-based line and 0-based offset."""

    def __init__(self, message: str, line: int | None = None, offset: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", offset {offset}" if offset is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.offset = offset


class ValidationError(LatticeError):
    """A structural invariant does not hold."""


class CycleError(ValidationError):
    pass


class SourceSinkError(ValidationError):
    pass


class NormalizationError(ValidationError):
    pass


class UnreachableNodeError(ValidationError):
    pass


class DuplicateEdgeError(ValidationError):
    pass


class EdgeProbabilityError(ValidationError):
    pass


@dataclass(frozen=True)
class Node:
    id: NodeId
    token: str


@dataclass(frozen=True)
class Edge:
    src: NodeId
    dst: NodeId
    p: float


@dataclass(frozen=True)
class LabeledEdge:
    src: NodeId
    dst: NodeId
    token: str
    p: float


def _check_graph(n_nodes: int,
                 edges: Sequence,
                 start: NodeId,
                 end: NodeId,
                 allow_parallel: bool = False,
                 node_name=str) -> list[NodeId]:
    """Shared DAG validation; returns a topological order of all nodes.

    Checks: dense ids, edge endpoints in range, probabilities in (0, 1],
    no duplicate (src, dst) pairs (edge-labeled lattices may carry
    parallel edges for word alternatives), acyclicity, unique source ==
    start, unique sink == end, outgoing probabilities normalized, and
    full start-to-end coverage of every node.
    """
    if n_nodes <= 0:
        raise ValidationError("lattice needs at least one node")
    if not (0 <= start < n_nodes and 0 <= end < n_nodes):
        raise ValidationError(f"start/end ids ({start}, {end}) out of range for {n_nodes} nodes")

    seen_pairs = set()
    out_p = [0.0] * n_nodes
    in_deg = [0] * n_nodes
    out_deg = [0] * n_nodes
    for e in edges:
        if not (0 <= e.src < n_nodes and 0 <= e.dst < n_nodes):
            raise ValidationError(f"edge ({e.src}, {e.dst}) references unknown node")
        if e.src == e.dst:
            raise CycleError(f"self-loop at node {e.src}")
        if not allow_parallel:
            if (e.src, e.dst) in seen_pairs:
                raise DuplicateEdgeError(f"duplicate edge ({e.src}, {e.dst})")
            seen_pairs.add((e.src, e.dst))
        if not (0.0 < e.p <= 1.0):
            raise EdgeProbabilityError(
                f"edge ({e.src}, {e.dst}) has transition probability {e.p!r} outside (0, 1]")
        out_p[e.src] += e.p
        in_deg[e.dst] += 1
        out_deg[e.src] += 1

    sources = [v for v in range(n_nodes) if in_deg[v] == 0]
    sinks = [v for v in range(n_nodes) if out_deg[v] == 0]
    if len(sources) != 1:
        raise SourceSinkError(f"expected exactly one source node, found {len(sources)}: {sources}")
    if len(sinks) != 1:
        raise SourceSinkError(f"expected exactly one sink node, found {len(sinks)}: {sinks}")
    if sources[0] != start:
        raise SourceSinkError(f"declared start {start} is not the unique source {sources[0]}")
    if sinks[0] != end:
        raise SourceSinkError(f"declared end {end} is not the unique sink {sinks[0]}")

    order = _kahn_order(n_nodes, edges, in_deg)

    for v in range(n_nodes):
        if v == end:
            continue
        if abs(out_p[v] - 1.0) > NORMALIZATION_ATOL:
            raise NormalizationError(
                f"transition probabilities at node {node_name(v)} sum to {out_p[v]:g}")

    # With a single source/sink and acyclicity every node is already on a
    # complete path; keep the explicit sweep as a defensive check.
    fwd = _reach_from(n_nodes, edges, start, forward=True)
    bwd = _reach_from(n_nodes, edges, end, forward=False)
    for v in range(n_nodes):
        if not (fwd[v] and bwd[v]):
            raise UnreachableNodeError(f"node {v} lies on no complete start-to-end path")
    return order


def _kahn_order(n_nodes: int, edges: Sequence, in_deg: list[int]) -> list[NodeId]:
    out_adj: list[list[NodeId]] = [[] for _ in range(n_nodes)]
    for e in edges:
        out_adj[e.src].append(e.dst)
    deg = list(in_deg)
    heap = [v for v in range(n_nodes) if deg[v] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for w in out_adj[v]:
            deg[w] -= 1
            if deg[w] == 0:
                heapq.heappush(heap, w)
    if len(order) != n_nodes:
        stuck = [v for v in range(n_nodes) if deg[v] > 0]
        raise CycleError(f"cycle detected among nodes {stuck}")
    return order


def _reach_from(n_nodes: int, edges: Sequence, root: NodeId, forward: bool) -> list[bool]:
    adj: list[list[NodeId]] = [[] for _ in range(n_nodes)]
    for e in edges:
        if forward:
            adj[e.src].append(e.dst)
        else:
            adj[e.dst].append(e.src)
    seen = [False] * n_nodes
    stack = [root]
    seen[root] = True
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return seen


class Lattice:
    """Immutable node-labeled lattice. Construction validates all invariants."""

    __slots__ = ("nodes", "edges", "start", "end", "_out", "_in", "_topo")

    def __init__(self, nodes: Iterable[Node], edges: Iterable[Edge], start: NodeId, end: NodeId):
        self.nodes: tuple[Node, ...] = tuple(nodes)
        self.edges: tuple[Edge, ...] = tuple(edges)
        self.start = start
        self.end = end
        ids = [n.id for n in self.nodes]
        if ids != list(range(len(self.nodes))):
            raise ValidationError("node ids must be dense 0..n-1 in node-list order")
        names = [f"{n.token}(id {n.id})" for n in self.nodes]
        self._topo = tuple(_check_graph(len(self.nodes), self.edges, start, end,
                                        node_name=names.__getitem__))
        out: list[list[Edge]] = [[] for _ in self.nodes]
        inc: list[list[Edge]] = [[] for _ in self.nodes]
        for e in self.edges:
            out[e.src].append(e)
            inc[e.dst].append(e)
        self._out = tuple(tuple(es) for es in out)
        self._in = tuple(tuple(es) for es in inc)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def token(self, v: NodeId) -> str:
        return self.nodes[v].token

    def tokens(self) -> list[str]:
        return [n.token for n in self.nodes]

    def out_edges(self, v: NodeId) -> tuple[Edge, ...]:
        return self._out[v]

    def in_edges(self, v: NodeId) -> tuple[Edge, ...]:
        return self._in[v]

    def __eq__(self, other) -> bool:
        return (isinstance(other, Lattice)
                and self.nodes == other.nodes
                and self.edges == other.edges
                and self.start == other.start
                and self.end == other.end)

    def __hash__(self):
        return hash((self.nodes, self.edges, self.start, self.end))

    def __repr__(self) -> str:
        return f"Lattice(|V|={self.n_nodes}, |E|={len(self.edges)})"


class EdgeLabeledLattice:
    """Lattice variant with tokens on edges; converted via line_graph."""

    __slots__ = ("n_nodes", "edges", "start", "end", "_out")

    def __init__(self, n_nodes: int, edges: Iterable[LabeledEdge], start: NodeId, end: NodeId):
        self.n_nodes = n_nodes
        self.edges: tuple[LabeledEdge, ...] = tuple(edges)
        self.start = start
        self.end = end
        _check_graph(n_nodes, self.edges, start, end, allow_parallel=True)
        out: list[list[LabeledEdge]] = [[] for _ in range(n_nodes)]
        for e in self.edges:
            out[e.src].append(e)
        self._out = tuple(tuple(es) for es in out)

    def out_edges(self, v: NodeId) -> tuple[LabeledEdge, ...]:
        return self._out[v]


def topological_order(lat: Lattice) -> list[NodeId]:
    """All node ids, every edge pointing forward, ties broken by ascending id."""
    return list(lat._topo)


def neighbors_out(lat: Lattice, v: NodeId) -> set[NodeId]:
    return {e.dst for e in lat.out_edges(v)}


def neighbors_in(lat: Lattice, v: NodeId) -> set[NodeId]:
    return {e.src for e in lat.in_edges(v)}


def successors(lat: Lattice, v: NodeId) -> set[NodeId]:
    """Transitive closure of out-edges (v itself excluded)."""
    seen: set[NodeId] = set()
    stack = [e.dst for e in lat.out_edges(v)]
    while stack:
        w = stack.pop()
        if w in seen:
            continue
        seen.add(w)
        stack.extend(e.dst for e in lat.out_edges(w))
    return seen


def predecessors(lat: Lattice, v: NodeId) -> set[NodeId]:
    """Transitive closure of in-edges (v itself excluded)."""
    seen: set[NodeId] = set()
    stack = [e.src for e in lat.in_edges(v)]
    while stack:
        w = stack.pop()
        if w in seen:
            continue
        seen.add(w)
        stack.extend(e.src for e in lat.in_edges(w))
    return seen


def reverse(lat: Lattice) -> Lattice:
    """Transpose the lattice, swapping start/end.

    Reversed transition probabilities are the unique choice that keeps
    every complete path's probability unchanged when read backwards:

        p_rev(j -> k) = marginal(k) * p_trans(k -> j) / marginal(j)

    which renormalizes exactly because marginals satisfy flow
    conservation.
    """
    from .masks import compute_marginals  # lattice-level op defined on top of mask DP

    marg = compute_marginals(lat)
    rev_edges = [Edge(e.dst, e.src, float(marg[e.src] * e.p / marg[e.dst]))
                 for e in lat.edges]
    return Lattice(lat.nodes, rev_edges, start=lat.end, end=lat.start)


def line_graph(ell: EdgeLabeledLattice) -> Lattice:
    """Convert an edge-labeled lattice to the node-labeled form.

    One node per original edge (carrying its token) plus fresh start/end
    sentinel nodes; nodes are adjacent iff the first edge's head is the
    second edge's tail. Transition probabilities out of node(e1) are the
    tail-conditional probabilities of the continuing edges, renormalized
    over the head's out-edges, so the multiset of complete
    (token-sequence, probability) paths is preserved exactly.
    """
    n_edges = len(ell.edges)
    nodes = [Node(0, START_TOKEN)]
    nodes += [Node(i + 1, e.token) for i, e in enumerate(ell.edges)]
    end_id = n_edges + 1
    nodes.append(Node(end_id, END_TOKEN))

    edge_index = {id(e): i + 1 for i, e in enumerate(ell.edges)}
    out_sum = {v: sum(e.p for e in ell.out_edges(v)) for v in range(ell.n_nodes)}

    new_edges: list[Edge] = []
    for e in ell.out_edges(ell.start):
        new_edges.append(Edge(0, edge_index[id(e)], e.p / out_sum[ell.start]))
    for i, e1 in enumerate(ell.edges):
        head = e1.dst
        if head == ell.end:
            new_edges.append(Edge(i + 1, end_id, 1.0))
        else:
            for e2 in ell.out_edges(head):
                new_edges.append(Edge(i + 1, edge_index[id(e2)], e2.p / out_sum[head]))
    return Lattice(nodes, new_edges, start=0, end=end_id)


def longest_path_positions(lat: Lattice):
    """Longest-path distance (in edges) from the start node to each node.

    Single DP sweep over the topological order; positions are strictly
    monotone along every edge and at least one complete path advances by
    exactly 1 per step.
    """
    import numpy as np

    pos = np.zeros(lat.n_nodes, dtype=np.int64)
    for v in lat._topo:
        base = pos[v]
        for e in lat.out_edges(v):
            if base + 1 > pos[e.dst]:
                pos[e.dst] = base + 1
    return pos


def linearize(lat: Lattice) -> list[tuple[str, NodeId]]:
    """Tokens in topological order; the structure-blind baseline view."""
    return [(lat.token(v), v) for v in lat._topo]


def from_sequence(tokens: Sequence[str]) -> Lattice:
    """Chain lattice for a plain token sequence, wrapped in sentinels,
    with all transition probabilities 1."""
    if not tokens:
        raise LatticeError("cannot build a lattice from an empty token sequence")
    toks = [START_TOKEN, *tokens, END_TOKEN]
    nodes = [Node(i, t) for i, t in enumerate(toks)]
    edges = [Edge(i, i + 1, 1.0) for i in range(len(toks) - 1)]
    return Lattice(nodes, edges, start=0, end=len(toks) - 1)


def duplicate_node(lat: Lattice, v: NodeId, p: float) -> Lattice:
    """Split internal node v into two copies carrying the same token.

    The copy keeps v's outgoing edges verbatim; each incoming edge's
    probability is split p / (1-p) between the two copies. Complete-path
    token sequences are unchanged and their probabilities are summed over
    the two interchangeable routes.
    """
    if v in (lat.start, lat.end):
        raise ValueError("cannot duplicate the start or end node")
    if not (0.0 < p < 1.0):
        raise ValueError("branch probability must lie strictly inside (0, 1)")
    twin = lat.n_nodes
    nodes = list(lat.nodes) + [Node(twin, lat.token(v))]
    edges: list[Edge] = []
    for e in lat.edges:
        if e.dst == v:
            edges.append(Edge(e.src, v, e.p * p))
            edges.append(Edge(e.src, twin, e.p * (1.0 - p)))
        else:
            edges.append(e)
    for e in lat.out_edges(v):
        edges.append(Edge(twin, e.dst, e.p))
    return Lattice(nodes, edges, start=lat.start, end=lat.end)


def count_paths(lat: Lattice) -> int:
    """Number of complete paths (exact integer count)."""
    counts = [0] * lat.n_nodes
    counts[lat.start] = 1
    for v in lat._topo:
        c = counts[v]
        if c:
            for e in lat.out_edges(v):
                counts[e.dst] += c
    return counts[lat.end]


def complete_paths(lat: Lattice, limit: int = 10 ** 6) -> list[tuple[list[NodeId], float]]:
    """Enumerate all complete paths with their probabilities.

    Exponential in general; guarded by `limit` on the path count.
    """
    n = count_paths(lat)
    if n > limit:
        raise ValueError(f"lattice has {n} complete paths, above the limit {limit}")
    out: list[tuple[list[NodeId], float]] = []
    stack: list[tuple[list[NodeId], float]] = [([lat.start], 1.0)]
    while stack:
        path, pr = stack.pop()
        v = path[-1]
        if v == lat.end:
            out.append((path, pr))
            continue
        for e in lat.out_edges(v):
            stack.append((path + [e.dst], pr * e.p))
    return out


def path_tokens(lat: Lattice, path: Sequence[NodeId]) -> list[str]:
    return [lat.token(v) for v in path]
