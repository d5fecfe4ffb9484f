"""Recurrent decoder with input feeding and score-biased cross-attention.

The decoder is a single LSTM layer. Each step consumes the previous
target embedding concatenated with the previous attention context (input
feeding); cross-attention scores between the new hidden state and the
encoder rows are shifted by the log marginal lattice score of each node
before normalization, so confidently-reached nodes draw more attention at
equal content match.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import ParameterStore, Tensor
from .rng import RandomSource


@dataclass
class DecoderState:
    hidden: Tensor  # (1, d_hidden)
    cell: Tensor    # (1, d_hidden)
    feed: Tensor    # (1, d_model) previous attention context


class DecoderParams:
    def __init__(self, vocab_size: int, d_emb: int, d_hidden: int, d_enc: int,
                 store: ParameterStore, rng: RandomSource, prefix: str = "dec"):
        self.vocab_size = vocab_size
        self.d_emb = d_emb
        self.d_hidden = d_hidden
        self.d_enc = d_enc
        d_in = d_emb + d_enc + d_hidden
        self.embeddings = store.new(f"{prefix}.emb",
                                    rng.normal(size=(vocab_size, d_emb), scale=1.0 / np.sqrt(d_emb)))
        self.lstm_w = store.new(f"{prefix}.lstm.W", ag.glorot(rng, d_in, 4 * d_hidden))
        self.lstm_b = store.new(f"{prefix}.lstm.b", np.zeros(4 * d_hidden))
        self.att_w = store.new(f"{prefix}.att.W", ag.glorot(rng, d_hidden, d_enc))
        self.out_w = store.new(f"{prefix}.out.W", ag.glorot(rng, d_hidden + d_enc, vocab_size))
        self.out_b = store.new(f"{prefix}.out.b", np.zeros(vocab_size))
        self.init_h_w = store.new(f"{prefix}.init.h.W", ag.glorot(rng, d_enc, d_hidden))
        self.init_h_b = store.new(f"{prefix}.init.h.b", np.zeros(d_hidden))
        self.init_c_w = store.new(f"{prefix}.init.c.W", ag.glorot(rng, d_enc, d_hidden))
        self.init_c_b = store.new(f"{prefix}.init.c.b", np.zeros(d_hidden))


def lstm_step(x: Tensor, h: Tensor, c: Tensor, w: Tensor, b: Tensor, d_hidden: int):
    z = ag.add(ag.matmul(ag.concat_cols([x, h]), w), b)
    i = ag.sigmoid(ag.slice_cols(z, 0, d_hidden))
    f = ag.sigmoid(ag.slice_cols(z, d_hidden, 2 * d_hidden))
    o = ag.sigmoid(ag.slice_cols(z, 2 * d_hidden, 3 * d_hidden))
    g = ag.tanh(ag.slice_cols(z, 3 * d_hidden, 4 * d_hidden))
    c_new = ag.add(ag.mul(f, c), ag.mul(i, g))
    h_new = ag.mul(o, ag.tanh(c_new))
    return h_new, c_new


def init_state(enc_out: Tensor, params: DecoderParams) -> DecoderState:
    """Initial recurrent memory from the mean of the encoder rows."""
    pooled = ag.mean_rows(enc_out)
    h0 = ag.tanh(ag.add(ag.matmul(pooled, params.init_h_w), params.init_h_b))
    c0 = ag.tanh(ag.add(ag.matmul(pooled, params.init_c_w), params.init_c_b))
    feed0 = ag.constant(np.zeros((1, params.d_enc)))
    return DecoderState(h0, c0, feed0)


def cross_attention(query: Tensor, enc_out: Tensor, log_marginals: np.ndarray,
                    params: DecoderParams):
    """Attention weights proportional to exp(score + log marginal).

    For sequence inputs all marginals are 1 and this reduces to standard
    attention. Returns (context row, weights).
    """
    scores = ag.matmul(ag.matmul(query, params.att_w), ag.transpose(enc_out))
    weights = ag.masked_softmax_rows(scores, log_marginals)
    context = ag.matmul(weights, enc_out)
    return context, weights


def decode_step(state: DecoderState, prev_token_id: int, enc_out: Tensor,
                log_marginals: np.ndarray, params: DecoderParams,
                mode: str, dropout_rate: float = 0.0, rng: RandomSource | None = None):
    """One decoder step; returns (new state, logits over the vocabulary)."""
    emb = ag.gather_rows(params.embeddings, np.array([prev_token_id], dtype=np.int64))
    x = ag.concat_cols([emb, state.feed])
    x = ag.dropout(x, dropout_rate, mode, rng)
    h, c = lstm_step(x, state.hidden, state.cell, params.lstm_w, params.lstm_b, params.d_hidden)
    context, _ = cross_attention(h, enc_out, log_marginals, params)
    combined = ag.dropout(ag.concat_cols([h, context]), dropout_rate, mode, rng)
    logits = ag.add(ag.matmul(combined, params.out_w), params.out_b)
    return DecoderState(h, c, context), logits
