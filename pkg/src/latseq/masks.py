"""Reachability masks, lattice marginals, and the path-enumeration oracle.

A mask is an additive pre-softmax attention term indexed [query][key]:
0 on the diagonal, -inf where the key is unreachable from the query in
the mask's direction, and (for probabilistic masks) the logarithm of the
conditional reaching probability otherwise. Probabilistic and binary
masks always share the same -inf support.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import Lattice, complete_paths, reverse, topological_order

FORWARD = "forward"
BACKWARD = "backward"
NONDIRECTIONAL = "nondirectional"
BINARY = "binary"
PROBABILISTIC = "probabilistic"

# Reaching probabilities below this are flushed to zero (-inf in log
# space) to keep subnormal noise out of the masks; such paths carry no
# usable signal.
PROB_FLUSH = 1e-300


@dataclass(frozen=True, eq=False)
class MaskMatrix:
    """Square additive attention mask, entries in [-inf, 0]."""

    direction: str
    kind: str
    m: np.ndarray

    @property
    def shape(self):
        return self.m.shape

    def support(self) -> np.ndarray:
        """Boolean matrix of finite (attendable) entries."""
        return np.isfinite(self.m)


def _forward_reach_bool(lat: Lattice) -> np.ndarray:
    """reach[i, j] is True iff j == i or j is a successor of i."""
    n = lat.n_nodes
    reach = np.eye(n, dtype=bool)
    for v in reversed(topological_order(lat)):
        for e in lat.out_edges(v):
            reach[v] |= reach[e.dst]
    return reach


def binary_masks(lat: Lattice) -> tuple[MaskMatrix, MaskMatrix]:
    """0/-inf masks from plain reachability, forward and backward."""
    reach = _forward_reach_bool(lat)
    neg = np.float64(-np.inf)
    fwd = np.where(reach, 0.0, neg)
    bwd = np.where(reach.T, 0.0, neg)
    return (MaskMatrix(FORWARD, BINARY, fwd), MaskMatrix(BACKWARD, BINARY, bwd))


def _reach_probs(lat: Lattice) -> np.ndarray:
    """Pairwise conditional reaching probabilities by dynamic programming.

    Row i holds p(j reached after i | i on the path). All query rows are
    swept together: processing column k in topological order performs,
    for every query row, exactly the per-query accumulation

        q[i, next] += p_trans(k, next) * q[i, k]

    in the same order as a sequential per-query sweep, so results are
    bit-identical to the one-query-at-a-time algorithm.
    """
    n = lat.n_nodes
    q = np.eye(n, dtype=np.float64)
    for k in topological_order(lat):
        col = q[:, k].copy()
        for e in lat.out_edges(k):
            q[:, e.dst] += e.p * col
    q[q < PROB_FLUSH] = 0.0
    return q


def probabilistic_masks(lat: Lattice) -> tuple[MaskMatrix, MaskMatrix]:
    """Log reaching-probability masks; backward = same DP on the reversed
    lattice (whose path probabilities match the original's)."""
    with np.errstate(divide="ignore"):
        fwd = np.log(_reach_probs(lat))
        bwd = np.log(_reach_probs(reverse(lat)))
    np.fill_diagonal(fwd, 0.0)
    np.fill_diagonal(bwd, 0.0)
    return (MaskMatrix(FORWARD, PROBABILISTIC, fwd), MaskMatrix(BACKWARD, PROBABILISTIC, bwd))


def compute_marginals(lat: Lattice) -> np.ndarray:
    """Probability that a complete path contains each node, indexed by id.

    Equals the exponentiated forward mask row of the start node; start
    and end always carry marginal 1. One topological sweep.
    """
    p = np.zeros(lat.n_nodes, dtype=np.float64)
    p[lat.start] = 1.0
    for v in topological_order(lat):
        pv = p[v]
        if pv:
            for e in lat.out_edges(v):
                p[e.dst] += e.p * pv
    return p


def brute_force_reach_probs(lat: Lattice, max_paths: int = 10 ** 6) -> np.ndarray:
    """Definitional reaching probabilities by complete-path enumeration.

    entry[i][j] = (total probability of paths visiting i then j) divided
    by (total probability of paths visiting i); diagonal 1. Exponential;
    test-side oracle only, guarded by `max_paths`.
    """
    n = lat.n_nodes
    contains = np.zeros(n, dtype=np.float64)
    pair = np.zeros((n, n), dtype=np.float64)
    for path, pr in complete_paths(lat, limit=max_paths):
        for a_idx, a in enumerate(path):
            contains[a] += pr
            for b in path[a_idx + 1:]:
                pair[a, b] += pr
    out = np.zeros((n, n), dtype=np.float64)
    nz = contains > 0.0
    out[nz, :] = pair[nz, :] / contains[nz, None]
    np.fill_diagonal(out, 1.0)
    return out


def merge_nondirectional(fwd: MaskMatrix, bwd: MaskMatrix) -> MaskMatrix:
    """Elementwise maximum of the two directions, applied to all heads."""
    if fwd.m.shape != bwd.m.shape:
        raise ValueError(f"mask shape mismatch: {fwd.m.shape} vs {bwd.m.shape}")
    if fwd.kind != bwd.kind:
        raise ValueError(f"mask kind mismatch: {fwd.kind} vs {bwd.kind}")
    return MaskMatrix(NONDIRECTIONAL, fwd.kind, np.maximum(fwd.m, bwd.m))


def head_masks(fwd: MaskMatrix, bwd: MaskMatrix, n_heads: int, strategy: str) -> list[MaskMatrix]:
    """Assign masks to attention heads.

    directional: the first half of the heads read forward, the second
    half backward. nondirectional: every head gets the merged mask.
    """
    if n_heads < 1:
        raise ValueError("n_heads must be positive")
    if strategy == "directional":
        if n_heads % 2 != 0:
            raise ValueError(f"directional masking needs an even head count, got {n_heads}")
        half = n_heads // 2
        return [fwd] * half + [bwd] * half
    if strategy == "nondirectional":
        merged = merge_nondirectional(fwd, bwd)
        return [merged] * n_heads
    raise ValueError(f"unknown head mask strategy {strategy!r}")
