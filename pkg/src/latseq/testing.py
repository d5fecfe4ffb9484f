"""Fixture builders shared by tests, scripts, and the benchmark harness."""
from __future__ import annotations

import numpy as np

from .lattice import Edge, Lattice, Node
from .rng import RandomSource


def chain_lattice(tokens: list[str]) -> Lattice:
    """Chain over the given tokens verbatim (no sentinel wrapping)."""
    nodes = [Node(i, t) for i, t in enumerate(tokens)]
    edges = [Edge(i, i + 1, 1.0) for i in range(len(tokens) - 1)]
    return Lattice(nodes, edges, 0, len(tokens) - 1)


def scored_branching_lattice() -> Lattice:
    """Seven-node branching lattice with known reaching probabilities.

    Hand-solved golden values (verifiable by path enumeration):
      marginals          = (1, 0.4, 0.6, 0.48, 0.12, 0.88, 1)
      P(a before e | e)  = 0.45         P(b before e | e) = 0.55
    Tokens: <s> a b c d e </s>, ids in that order.
    """
    tokens = ["<s>", "a", "b", "c", "d", "e", "</s>"]
    nodes = [Node(i, t) for i, t in enumerate(tokens)]
    edges = [
        Edge(0, 1, 0.4),          # <s> -> a
        Edge(0, 2, 0.6),          # <s> -> b
        Edge(1, 5, 0.99),         # a -> e
        Edge(1, 6, 0.01),         # a -> </s>
        Edge(2, 3, 0.8),          # b -> c
        Edge(2, 4, 0.2),          # b -> d
        Edge(3, 5, 1.0),          # c -> e
        Edge(4, 5, 1.0 / 30.0),   # d -> e
        Edge(4, 6, 29.0 / 30.0),  # d -> </s>
        Edge(5, 6, 1.0),          # e -> </s>
    ]
    return Lattice(nodes, edges, 0, 6)


def random_lattice(rng: RandomSource,
                   n_internal: int | None = None,
                   max_internal: int = 10,
                   density: float = 0.35,
                   vocab: int = 20) -> Lattice:
    """Random scored lattice with a single source/sink by construction.

    Nodes 0..n-1 are laid out in id order (also a topological order);
    every internal node gets at least one edge from an earlier node and
    one to a later node, extra forward edges appear with probability
    `density`, and outgoing probabilities are Dirichlet-normalized.
    """
    if n_internal is None:
        n_internal = int(rng.integers(1, max_internal + 1))
    n = n_internal + 2
    pairs: set[tuple[int, int]] = set()
    for v in range(1, n - 1):
        pairs.add((int(rng.integers(0, v)), v))
        pairs.add((v, int(rng.integers(v + 1, n))))
    pairs.add((0, int(rng.integers(1, n))))
    for a in range(n - 1):
        for b in range(a + 1, n):
            if (a, b) not in pairs and rng.uniform() < density:
                pairs.add((a, b))
    # Drop shortcuts into the sink from the source if they would be the
    # source's only edge duplicated; not needed, Dirichlet handles any set.
    out_of: dict[int, list[int]] = {}
    for a, b in sorted(pairs):
        out_of.setdefault(a, []).append(b)
    edges: list[Edge] = []
    for a, dsts in out_of.items():
        probs = rng.dirichlet([1.0] * len(dsts))
        # Dirichlet can emit exact zeros in pathological draws; nudge.
        probs = probs + 1e-9
        probs = probs / probs.sum()
        for b, p in zip(dsts, probs):
            edges.append(Edge(a, b, float(p)))
    tokens = ["<s>"] + [f"w{int(rng.integers(0, vocab)):02d}" for _ in range(n - 2)] + ["</s>"]
    nodes = [Node(i, t) for i, t in enumerate(tokens)]
    return Lattice(nodes, edges, 0, n - 1)


def relabel_nodes(lat: Lattice, perm: np.ndarray) -> Lattice:
    """Apply a node-id permutation: node i becomes perm[i]."""
    perm = np.asarray(perm, dtype=np.int64)
    nodes = [None] * lat.n_nodes
    for v in range(lat.n_nodes):
        nodes[int(perm[v])] = Node(int(perm[v]), lat.token(v))
    edges = [Edge(int(perm[e.src]), int(perm[e.dst]), e.p) for e in lat.edges]
    return Lattice(nodes, edges, int(perm[lat.start]), int(perm[lat.end]))
