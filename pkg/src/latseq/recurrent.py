"""Reference recurrent lattice encoder (speed/quality baseline).

Encodes nodes one at a time in topological order (and reverse order for
the backward direction), which is inherently sequential across nodes.
When a node has several predecessors their recurrent states are combined
by marginal-weighted averaging before the cell update; outputs are the
concatenated forward/backward hidden states per node.
"""
from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import ParameterStore, Tensor
from .decoder import lstm_step
from .lattice import Lattice, topological_order
from .masks import compute_marginals
from .rng import RandomSource


class RecurrentLatticeEncoder:
    def __init__(self, vocab_size: int, d_model: int, store: ParameterStore,
                 rng: RandomSource, prefix: str = "rec"):
        if d_model % 2 != 0:
            raise ValueError("d_model must be even (forward/backward halves)")
        self.d_rnn = d_model // 2
        self.d_model = d_model
        self.vocab_size = vocab_size
        d_emb = d_model
        self.embeddings = store.new(f"{prefix}.emb",
                                    rng.normal(size=(vocab_size, d_emb), scale=1.0 / np.sqrt(d_emb)))
        self.w_fwd = store.new(f"{prefix}.fwd.W", ag.glorot(rng, d_emb + self.d_rnn, 4 * self.d_rnn))
        self.b_fwd = store.new(f"{prefix}.fwd.b", np.zeros(4 * self.d_rnn))
        self.w_bwd = store.new(f"{prefix}.bwd.W", ag.glorot(rng, d_emb + self.d_rnn, 4 * self.d_rnn))
        self.b_bwd = store.new(f"{prefix}.bwd.b", np.zeros(4 * self.d_rnn))

    def _sweep(self, lat: Lattice, token_ids: np.ndarray, order: list[int],
               incoming, w: Tensor, b: Tensor, marg: np.ndarray) -> list[Tensor]:
        d = self.d_rnn
        zero = ag.constant(np.zeros((1, d)))
        hidden: list[Tensor | None] = [None] * lat.n_nodes
        cell: list[Tensor | None] = [None] * lat.n_nodes
        for v in order:
            preds = incoming(v)
            if not preds:
                h_in, c_in = zero, zero
            elif len(preds) == 1:
                h_in, c_in = hidden[preds[0]], cell[preds[0]]
            else:
                weights = np.array([marg[u] for u in preds])
                weights = weights / weights.sum()
                h_in = None
                c_in = None
                for u, wgt in zip(preds, weights):
                    hw = ag.scale(hidden[u], float(wgt))
                    cw = ag.scale(cell[u], float(wgt))
                    h_in = hw if h_in is None else ag.add(h_in, hw)
                    c_in = cw if c_in is None else ag.add(c_in, cw)
            x = ag.gather_rows(self.embeddings, token_ids[v:v + 1])
            hidden[v], cell[v] = lstm_step(x, h_in, c_in, w, b, d)
        return hidden

    def encode(self, lat: Lattice, token_ids: np.ndarray) -> Tensor:
        """Bidirectional node-by-node encoding, |V| x d_model output."""
        marg = compute_marginals(lat)
        order = topological_order(lat)
        fwd = self._sweep(lat, token_ids, order,
                          lambda v: [e.src for e in lat.in_edges(v)],
                          self.w_fwd, self.b_fwd, marg)
        bwd = self._sweep(lat, token_ids, list(reversed(order)),
                          lambda v: [e.dst for e in lat.out_edges(v)],
                          self.w_bwd, self.b_bwd, marg)
        rows = [ag.concat_cols([fwd[v], bwd[v]]) for v in range(lat.n_nodes)]
        # Stack rows: concat along columns after transposing is avoidable;
        # build a (V, 2d) tensor by concatenating row tensors vertically.
        return _vstack(rows)


def _vstack(rows: list[Tensor]) -> Tensor:
    datas = [r.data for r in rows]
    heights = [d.shape[0] for d in datas]
    offsets = np.cumsum([0] + heights)
    out_data = np.concatenate(datas, axis=0)

    def backward(g):
        for r, i0, i1 in zip(rows, offsets[:-1], offsets[1:]):
            ag._accum(r, g[i0:i1])

    return ag._make(out_data, tuple(rows), backward)
