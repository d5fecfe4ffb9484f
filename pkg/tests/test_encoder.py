import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from latseq import autograd as ag
from latseq.autograd import ParameterStore
from latseq.encoder import (
    EncoderConfig,
    EncoderStack,
    PositionOverflowError,
    embed_inputs,
    encode,
    encode_lattice,
    encoder_layer,
    lattice_head_masks,
    lattice_positions,
)
from latseq.lattice import Lattice, Node, Edge, duplicate_node, from_sequence, linearize
from latseq.rng import RandomSource
from latseq.testing import chain_lattice, random_lattice, relabel_nodes

SMALL = EncoderConfig(d_model=16, n_heads=4, n_layers=2, d_ff=32, dropout=0.1,
                      max_position=64)


def make_stack(config=SMALL, vocab=40, seed=5):
    store = ParameterStore()
    return EncoderStack(config, vocab, store, RandomSource(seed)), store


def ids_for(lat, vocab=40):
    return np.array([abs(hash(t)) % vocab for t in lat.tokens()], dtype=np.int64)


class TestConfig:
    def test_head_divisibility_enforced(self):
        with pytest.raises(ValueError, match="divisible"):
            EncoderConfig(d_model=30, n_heads=4)

    def test_directional_needs_even_heads(self):
        with pytest.raises(ValueError, match="even"):
            EncoderConfig(d_model=15, n_heads=3, direction="directional")

    def test_defaults(self):
        cfg = EncoderConfig()
        assert (cfg.d_model, cfg.n_heads, cfg.n_layers, cfg.d_ff) == (64, 4, 3, 256)
        assert cfg.dropout == 0.1
        assert cfg.d_head == 16


class TestPositions:
    def test_position_overflow_names_node(self):
        cfg = dataclasses.replace(SMALL, max_position=3)
        lat = from_sequence(["a", "b", "c", "d"])
        with pytest.raises(PositionOverflowError, match="node 5 has position 5 >= max_position 3"):
            lattice_positions(lat, cfg)

    def test_topological_positions_are_order_indices(self):
        lat = random_lattice(RandomSource(3), n_internal=5)
        cfg = dataclasses.replace(SMALL, positions="topological")
        pos = lattice_positions(lat, cfg)
        assert sorted(pos.tolist()) == list(range(lat.n_nodes))

    def test_none_positions_zero(self):
        lat = from_sequence(["a", "b"])
        cfg = dataclasses.replace(SMALL, positions="none")
        assert lattice_positions(lat, cfg).tolist() == [0, 0, 0, 0]


class TestEmbedInputs:
    def test_positions_none_passthrough(self):
        cfg = dataclasses.replace(SMALL, positions="none", dropout=0.0)
        stack, _ = make_stack(cfg)
        lat = from_sequence(["a", "b"])
        ids = ids_for(lat)
        out = embed_inputs(ids, lattice_positions(lat, cfg), stack, ag.INFER)
        np.testing.assert_array_equal(out.data, stack.token_embeddings.data[ids])

    def test_chain_matches_sequential_embedding(self):
        stack, _ = make_stack()
        lat = from_sequence(["a", "b", "c"])
        ids = ids_for(lat)
        pos = lattice_positions(lat, stack.config)
        out = embed_inputs(ids, pos, stack, ag.INFER)
        want = stack.token_embeddings.data[ids] + stack.position_embeddings.data[np.arange(5)]
        np.testing.assert_array_equal(out.data, want)

    def test_parallel_nodes_share_position_vector(self):
        nodes = [Node(0, "S"), Node(1, "a"), Node(2, "b"), Node(3, "E")]
        edges = [Edge(0, 1, 0.5), Edge(0, 2, 0.5), Edge(1, 3, 1.0), Edge(2, 3, 1.0)]
        lat = Lattice(nodes, edges, 0, 3)
        stack, _ = make_stack()
        pos = lattice_positions(lat, stack.config)
        assert pos[1] == pos[2] == 1
        same_tok = np.array([7, 7, 7, 7])
        out = embed_inputs(same_tok, pos, stack, ag.INFER)
        np.testing.assert_array_equal(out.data[1], out.data[2])


class TestEncoderLayer:
    def test_single_node_lattice(self):
        lat = Lattice([Node(0, "x")], [], 0, 0)
        stack, _ = make_stack()
        out = encode_lattice(lat, np.array([3]), stack, ag.INFER)
        assert out.shape == (1, SMALL.d_model)
        assert np.all(np.isfinite(out.data))

    def test_sequence_nondirectional_equals_zero_mask(self):
        cfg = dataclasses.replace(SMALL, direction="nondirectional", dropout=0.0)
        stack, _ = make_stack(cfg)
        lat = from_sequence(["a", "b", "c"])
        ids = ids_for(lat)
        pos = lattice_positions(lat, cfg)
        x = embed_inputs(ids, pos, stack, ag.INFER)
        masks = lattice_head_masks(lat, cfg)
        zeros = [np.zeros((lat.n_nodes, lat.n_nodes))] * cfg.n_heads
        a = encoder_layer(x, masks, stack.layers[0], cfg, ag.INFER)
        b = encoder_layer(x, zeros, stack.layers[0], cfg, ag.INFER)
        np.testing.assert_array_equal(a.data, b.data)

    def test_mask_count_checked(self):
        stack, _ = make_stack()
        lat = from_sequence(["a"])
        x = embed_inputs(ids_for(lat), lattice_positions(lat, SMALL), stack, ag.INFER)
        with pytest.raises(ValueError, match="head masks"):
            encoder_layer(x, [np.zeros((3, 3))], stack.layers[0], SMALL, ag.INFER)


def encode_infer(lat, ids, stack, capture=None):
    return encode_lattice(lat, ids, stack, ag.INFER, capture=capture)


class TestEncodeReductions:
    def test_sequence_nondirectional_equals_unmasked(self):
        """Single-path inputs make reachability masking vacuous."""
        base = dataclasses.replace(SMALL, dropout=0.0)
        for kind in ("probabilistic", "binary"):
            cfg = dataclasses.replace(base, mask_kind=kind, direction="nondirectional")
            cfg_none = dataclasses.replace(base, mask_kind="none")
            stack, _ = make_stack(cfg)
            stack_none, _ = make_stack(cfg_none)  # same seed -> same params
            lat = from_sequence([f"w{i}" for i in range(6)])
            ids = ids_for(lat)
            a = encode_infer(lat, ids, stack)
            b = encode_infer(lat, ids, stack_none)
            np.testing.assert_allclose(a.data, b.data, atol=1e-12)

    def test_sequence_directional_equals_explicit_triangular_masks(self):
        cfg = dataclasses.replace(SMALL, dropout=0.0, mask_kind="probabilistic",
                                  direction="directional")
        stack, _ = make_stack(cfg)
        lat = from_sequence(["a", "b", "c", "d"])
        ids = ids_for(lat)
        n = lat.n_nodes
        upper = np.where(np.triu(np.ones((n, n), dtype=bool)), 0.0, -np.inf)
        explicit = [upper, upper, upper.T, upper.T]
        a = encode_infer(lat, ids, stack)
        b = encode(ids, lattice_positions(lat, cfg), explicit, stack, ag.INFER)
        np.testing.assert_allclose(a.data, b.data, atol=1e-12)

    def test_mask_none_equals_linearized_chain(self):
        cfg = dataclasses.replace(SMALL, mask_kind="none", positions="topological",
                                  dropout=0.0)
        stack, _ = make_stack(cfg)
        lat = random_lattice(RandomSource(8), n_internal=6)
        ids = ids_for(lat)
        out_lat = encode_infer(lat, ids, stack)
        order = [v for _, v in linearize(lat)]
        chain = chain_lattice([lat.token(v) for v in order])
        out_chain = encode_infer(chain, ids[order], stack)
        np.testing.assert_allclose(out_lat.data[order], out_chain.data, atol=1e-12)


class TestPathDuplicationInvariance:
    def build(self, mask_kind, p=0.3, seed=5):
        cfg = dataclasses.replace(SMALL, mask_kind=mask_kind, dropout=0.0)
        stack, _ = make_stack(cfg, seed=seed)
        lat = from_sequence(["a", "b", "c"])
        dup = duplicate_node(lat, 2, p)
        ids = ids_for(lat)
        ids_dup = np.concatenate([ids, ids[2:3]])
        out = encode_infer(lat, ids, stack)
        out_dup = encode_infer(dup, ids_dup, stack)
        return out.data, out_dup.data

    def test_probabilistic_invariant(self):
        out, out_dup = self.build("probabilistic")
        twin = out_dup.shape[0] - 1
        np.testing.assert_allclose(out_dup[:-1], out, atol=1e-9)
        np.testing.assert_allclose(out_dup[twin], out[2], atol=1e-9)

    def test_binary_masks_break_invariance(self):
        out, out_dup = self.build("binary")
        assert np.max(np.abs(out_dup[:-1] - out)) > 1e-3

    @given(st.integers(0, 2_000))
    def test_probabilistic_invariance_random_lattices(self, seed):
        rng = RandomSource(seed)
        lat = random_lattice(rng, max_internal=6)
        internal = [v for v in range(lat.n_nodes) if v not in (lat.start, lat.end)]
        if not internal:
            return
        v = internal[int(rng.integers(0, len(internal)))]
        p = float(rng.uniform(low=0.1, high=0.9))
        dup = duplicate_node(lat, v, p)
        cfg = dataclasses.replace(SMALL, dropout=0.0, mask_kind="probabilistic")
        stack, _ = make_stack(cfg)
        ids = ids_for(lat)
        ids_dup = np.concatenate([ids, ids[v:v + 1]])
        out = encode_infer(lat, ids, stack)
        out_dup = encode_infer(dup, ids_dup, stack)
        np.testing.assert_allclose(out_dup.data[:-1], out.data, atol=1e-9)
        np.testing.assert_allclose(out_dup.data[-1], out.data[v], atol=1e-9)


class TestPermutationEquivariance:
    @given(st.integers(0, 2_000))
    def test_relabel_permutes_rows(self, seed):
        rng = RandomSource(seed)
        lat = random_lattice(rng, max_internal=6)
        perm = rng.permutation(lat.n_nodes)
        relabeled = relabel_nodes(lat, perm)
        cfg = dataclasses.replace(SMALL, dropout=0.0)
        stack, _ = make_stack(cfg)
        ids = ids_for(lat)
        ids_perm = np.empty_like(ids)
        for v in range(lat.n_nodes):
            ids_perm[perm[v]] = ids[v]
        out = encode_infer(lat, ids, stack)
        out_perm = encode_infer(relabeled, ids_perm, stack)
        for v in range(lat.n_nodes):
            np.testing.assert_allclose(out_perm.data[perm[v]], out.data[v], atol=1e-9)


class TestAttentionSupport:
    @given(st.integers(0, 2_000))
    def test_weights_zero_outside_reachable_closure(self, seed):
        from latseq.masks import binary_masks

        lat = random_lattice(RandomSource(seed), max_internal=6)
        cfg = dataclasses.replace(SMALL, dropout=0.0, mask_kind="probabilistic",
                                  direction="directional")
        stack, _ = make_stack(cfg)
        captured = []
        encode_infer(lat, ids_for(lat), stack, capture=captured)
        fwd, bwd = binary_masks(lat)
        half = cfg.n_heads // 2
        assert len(captured) == cfg.n_layers * cfg.n_heads
        for li in range(cfg.n_layers):
            layer_w = captured[li * cfg.n_heads:(li + 1) * cfg.n_heads]
            for w in layer_w[:half]:
                assert np.all(w[~fwd.support()] == 0.0)
            for w in layer_w[half:]:
                assert np.all(w[~bwd.support()] == 0.0)


class TestAttentionDump:
    def test_tsv_blocks_per_layer_head(self):
        from latseq.encoder import attention_dump_tsv

        lat = from_sequence(["a", "b"])
        cfg = dataclasses.replace(SMALL, dropout=0.0)
        stack, _ = make_stack(cfg)
        captured = []
        encode_infer(lat, ids_for(lat), stack, capture=captured)
        dump = attention_dump_tsv(captured, cfg.n_heads)
        assert dump.count("# layer") == cfg.n_layers * cfg.n_heads
        first_block = dump.split("\n")[1]
        assert len(first_block.split("\t")) == lat.n_nodes


class TestGraphAttentionBaseline:
    def test_adjacency_only_mask_runs(self):
        """Local-context baseline: attention restricted to direct neighbors."""
        lat = random_lattice(RandomSource(4), n_internal=5)
        n = lat.n_nodes
        adj = np.full((n, n), -np.inf)
        np.fill_diagonal(adj, 0.0)
        for e in lat.edges:
            adj[e.src, e.dst] = 0.0
            adj[e.dst, e.src] = 0.0
        cfg = dataclasses.replace(SMALL, dropout=0.0)
        stack, _ = make_stack(cfg)
        masks = [adj] * cfg.n_heads
        out = encode(ids_for(lat), lattice_positions(lat, cfg), masks, stack, ag.INFER)
        full = encode_infer(lat, ids_for(lat), stack)
        assert np.all(np.isfinite(out.data))
        assert np.max(np.abs(out.data - full.data)) > 1e-6


class TestEncoderGradients:
    def test_full_encoder_gradcheck(self):
        lat = random_lattice(RandomSource(9), n_internal=4)
        cfg = dataclasses.replace(SMALL, n_layers=1, dropout=0.1)
        store = ParameterStore()
        stack = EncoderStack(cfg, 40, store, RandomSource(2))
        ids = ids_for(lat)
        pos = lattice_positions(lat, cfg)
        masks = lattice_head_masks(lat, cfg)

        def loss():
            out = encode(ids, pos, masks, stack, ag.TRAIN, RandomSource(77))
            return ag.mean_all(ag.mul(out, out))

        ag.check_gradients(loss, store, RandomSource(3), n_coords=6, rtol=1e-4)
