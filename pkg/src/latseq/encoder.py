"""Masked multi-head self-attention encoder over lattices.

Every attention head applies an additive reachability mask before the
softmax; positional information comes from learned embeddings indexed by
longest-path distance from the start node (or topological index / none,
for the ablation switches). Layers follow the residual scheme

    L = LN(dropout(heads) + x)        Y = LN(dropout(FF(L)) + L)

with attention weights softmax(scale * dropout(Q K^T + M)) V per head,
where the scale uses the per-head dimension.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import ParameterStore, Tensor
from .lattice import Lattice, longest_path_positions, topological_order
from .masks import binary_masks, head_masks, probabilistic_masks
from .rng import RandomSource

MASK_KINDS = ("binary", "probabilistic", "none")
DIRECTIONS = ("directional", "nondirectional")
POSITION_MODES = ("longest_path", "topological", "none")


class PositionOverflowError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 3
    d_ff: int = 256
    dropout: float = 0.1
    mask_kind: str = "probabilistic"
    direction: str = "directional"
    positions: str = "longest_path"
    max_position: int = 128

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.direction == "directional" and self.n_heads % 2 != 0:
            raise ValueError("directional masking needs an even number of heads")
        if self.mask_kind not in MASK_KINDS:
            raise ValueError(f"mask_kind must be one of {MASK_KINDS}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if self.positions not in POSITION_MODES:
            raise ValueError(f"positions must be one of {POSITION_MODES}")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


@dataclass
class LayerParams:
    heads: list[tuple[Tensor, Tensor, Tensor]]  # (Wq, Wk, Wv) per head
    ff_w1: Tensor
    ff_b1: Tensor
    ff_w2: Tensor
    ff_b2: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor


class EncoderStack:
    """Token/position embeddings plus per-layer attention parameters."""

    def __init__(self, config: EncoderConfig, vocab_size: int, store: ParameterStore,
                 rng: RandomSource, prefix: str = "enc"):
        self.config = config
        self.vocab_size = vocab_size
        d = config.d_model
        self.token_embeddings = store.new(
            f"{prefix}.tok_emb", rng.normal(size=(vocab_size, d), scale=1.0 / math.sqrt(d)))
        self.position_embeddings = store.new(
            f"{prefix}.pos_emb", rng.normal(size=(config.max_position, d), scale=1.0 / math.sqrt(d)))
        self.layers: list[LayerParams] = []
        dh = config.d_head
        for li in range(config.n_layers):
            heads = []
            for hi in range(config.n_heads):
                base = f"{prefix}.layer{li}.head{hi}"
                heads.append((
                    store.new(f"{base}.Wq", ag.glorot(rng, d, dh)),
                    store.new(f"{base}.Wk", ag.glorot(rng, d, dh)),
                    store.new(f"{base}.Wv", ag.glorot(rng, d, dh)),
                ))
            base = f"{prefix}.layer{li}"
            self.layers.append(LayerParams(
                heads=heads,
                ff_w1=store.new(f"{base}.ff.W1", ag.glorot(rng, d, config.d_ff)),
                ff_b1=store.new(f"{base}.ff.b1", np.zeros(config.d_ff)),
                ff_w2=store.new(f"{base}.ff.W2", ag.glorot(rng, config.d_ff, d)),
                ff_b2=store.new(f"{base}.ff.b2", np.zeros(d)),
                ln1_gain=store.new(f"{base}.ln1.gain", np.ones(d)),
                ln1_bias=store.new(f"{base}.ln1.bias", np.zeros(d)),
                ln2_gain=store.new(f"{base}.ln2.gain", np.ones(d)),
                ln2_bias=store.new(f"{base}.ln2.bias", np.zeros(d)),
            ))


def lattice_positions(lat: Lattice, config: EncoderConfig) -> np.ndarray:
    """Per-node position indices according to the configured scheme."""
    n = lat.n_nodes
    if config.positions == "longest_path":
        pos = longest_path_positions(lat)
    elif config.positions == "topological":
        pos = np.zeros(n, dtype=np.int64)
        for idx, v in enumerate(topological_order(lat)):
            pos[v] = idx
    else:
        pos = np.zeros(n, dtype=np.int64)
    if pos.size and pos.max() >= config.max_position:
        v = int(np.argmax(pos))
        raise PositionOverflowError(
            f"node {v} has position {int(pos[v])} >= max_position {config.max_position}")
    return pos


def lattice_head_masks(lat: Lattice, config: EncoderConfig) -> list[np.ndarray]:
    """Per-head additive mask matrices for one lattice under this config."""
    n = lat.n_nodes
    if config.mask_kind == "none":
        zero = np.zeros((n, n), dtype=np.float64)
        return [zero] * config.n_heads
    if config.mask_kind == "binary":
        fwd, bwd = binary_masks(lat)
    else:
        fwd, bwd = probabilistic_masks(lat)
    return [m.m for m in head_masks(fwd, bwd, config.n_heads, config.direction)]


def embed_inputs(token_ids: np.ndarray, positions: np.ndarray, stack: EncoderStack,
                 mode: str, rng: RandomSource | None = None) -> Tensor:
    """dropout(token_embedding + position_embedding) rows, one per node."""
    cfg = stack.config
    x = ag.gather_rows(stack.token_embeddings, token_ids)
    if cfg.positions != "none":
        x = ag.add(x, ag.gather_rows(stack.position_embeddings, positions))
    return ag.dropout(x, cfg.dropout, mode, rng)


def encoder_layer(x: Tensor, masks: list[np.ndarray], layer: LayerParams,
                  config: EncoderConfig, mode: str, rng: RandomSource | None = None,
                  capture: list | None = None) -> Tensor:
    if len(masks) != config.n_heads:
        raise ValueError(f"need {config.n_heads} head masks, got {len(masks)}")
    inv_sqrt_d = 1.0 / math.sqrt(config.d_head)
    outputs = []
    for (wq, wk, wv), mask in zip(layer.heads, masks):
        q = ag.matmul(x, wq)
        k = ag.matmul(x, wk)
        v = ag.matmul(x, wv)
        # The 1/sqrt(d) scale applies to the content scores only; the
        # additive mask enters the softmax unscaled. Scaling a 0/-inf
        # binary mask would be a no-op anyway, and a scaled log-probability
        # mask would break invariance to path duplication (the weights
        # must combine as p + (1-p), not p^s + (1-p)^s).
        scores = ag.matmul(q, ag.transpose(k))
        scores = ag.dropout(scores, config.dropout, mode, rng)
        weights = ag.masked_softmax_rows(ag.scale(scores, inv_sqrt_d), mask)
        if capture is not None:
            capture.append(weights.data)
        outputs.append(ag.matmul(weights, v))
    h = ag.concat_cols(outputs)
    l = ag.layer_norm(ag.add(ag.dropout(h, config.dropout, mode, rng), x),
                      layer.ln1_gain, layer.ln1_bias)
    ff = ag.feed_forward(l, layer.ff_w1, layer.ff_b1, layer.ff_w2, layer.ff_b2)
    y = ag.layer_norm(ag.add(ag.dropout(ff, config.dropout, mode, rng), l),
                      layer.ln2_gain, layer.ln2_bias)
    return y


def encode(token_ids: np.ndarray, positions: np.ndarray, masks: list[np.ndarray],
           stack: EncoderStack, mode: str, rng: RandomSource | None = None,
           capture: list | None = None) -> Tensor:
    """Full encoder pass: embeddings then n_layers masked attention layers.

    `masks`/`positions` are the per-lattice arrays from lattice_head_masks
    and lattice_positions, precomputed at data-loading time. Deterministic
    in infer mode.
    """
    x = embed_inputs(token_ids, positions, stack, mode, rng)
    for layer in stack.layers:
        x = encoder_layer(x, masks, layer, stack.config, mode, rng, capture=capture)
    return x


def encode_lattice(lat: Lattice, token_ids: np.ndarray, stack: EncoderStack,
                   mode: str, rng: RandomSource | None = None,
                   capture: list | None = None) -> Tensor:
    """Convenience wrapper computing positions and masks on the fly."""
    positions = lattice_positions(lat, stack.config)
    masks = lattice_head_masks(lat, stack.config)
    return encode(token_ids, positions, masks, stack, mode, rng, capture=capture)


def attention_dump_tsv(captured: list[np.ndarray], n_heads: int) -> str:
    """Debug rendering of captured attention weights, one TSV block per
    layer/head (rows are queries)."""
    lines = []
    for idx, weights in enumerate(captured):
        lines.append(f"# layer {idx // n_heads} head {idx % n_heads}")
        for row in weights:
            lines.append("\t".join(f"{x:.17g}" for x in row))
    return "\n".join(lines) + "\n"
