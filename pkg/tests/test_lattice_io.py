import ast
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from latseq.lattice import (
    Lattice,
    LatticeSyntaxError,
    NormalizationError,
    complete_paths,
    path_tokens,
)
from latseq.lattice_io import (
    lattice_from_json,
    lattice_to_json,
    parse_lattice,
    parse_plf,
    to_dot,
)
from latseq.rng import RandomSource
from latseq.testing import random_lattice, scored_branching_lattice

from conftest import lattice_for_seed

# PLF rendering of the branching example's topology: edge-labeled, one
# edge per original content node.
BRANCHING_PLF = (
    "((('a',0.4,1),('b',0.6,2),),"
    "(('e',0.99,3),('x',0.01,4),),"
    "(('c',0.8,1),('d',0.2,2),),"
    "(('e',1.0,1),),"
    "(('e',0.03333333333333333,1),('y',0.9666666666666667,2),),"
    "(('z',1.0,1),),)"
)


class TestJsonFormat:
    def test_canonical_shape(self):
        lat = parse_lattice(
            '{"nodes":[{"id":0,"token":"<s>"},{"id":1,"token":"hi"},{"id":2,"token":"</s>"}],'
            '"edges":[{"from":0,"to":1,"p":1.0},{"from":1,"to":2,"p":1.0}],"start":0,"end":2}')
        assert lat.n_nodes == 3
        assert lat.token(1) == "hi"

    def test_three_node_chain(self):
        text = json.dumps({
            "nodes": [{"id": 0, "token": "S"}, {"id": 1, "token": "a"}, {"id": 2, "token": "E"}],
            "edges": [{"from": 0, "to": 1, "p": 1.0}, {"from": 1, "to": 2, "p": 1.0}],
            "start": 0, "end": 2})
        lat = parse_lattice(text)
        assert lat.n_nodes == 3 and len(lat.edges) == 2

    def test_normalization_error_message(self):
        text = json.dumps({
            "nodes": [{"id": 0, "token": "S"}, {"id": 1, "token": "a"},
                      {"id": 2, "token": "b"}, {"id": 3, "token": "E"}],
            "edges": [{"from": 0, "to": 1, "p": 0.4}, {"from": 0, "to": 2, "p": 0.7},
                      {"from": 1, "to": 3, "p": 1.0}, {"from": 2, "to": 3, "p": 1.0}],
            "start": 0, "end": 3})
        with pytest.raises(NormalizationError, match="sum to 1.1"):
            parse_lattice(text)

    def test_syntax_error_carries_location(self):
        with pytest.raises(LatticeSyntaxError, match="line 1"):
            parse_lattice('{"nodes": [', format="json")

    def test_ids_reassigned_densely(self):
        text = json.dumps({
            "nodes": [{"id": 10, "token": "S"}, {"id": 20, "token": "E"}],
            "edges": [{"from": 10, "to": 20, "p": 1.0}],
            "start": 10, "end": 20})
        lat = parse_lattice(text)
        assert [n.id for n in lat.nodes] == [0, 1]

    @given(st.integers(0, 10_000))
    def test_roundtrip_bit_exact(self, seed):
        lat = lattice_for_seed(seed)
        text = lattice_to_json(lat)
        again = lattice_from_json(text)
        assert again == lat  # dataclass equality: exact floats
        assert lattice_to_json(again) == text

    def test_float_shortest_representation(self):
        lat = scored_branching_lattice()
        text = lattice_to_json(lat)
        assert '"p":0.4' in text and '"p":0.99' in text
        assert lattice_from_json(text).edges[0].p == 0.4


class TestPlfFormat:
    def test_parse_counts_nodes_internal(self):
        ell = parse_plf("((('x',0.5,1),('y',0.5,2),),(('z',1.0,1),),)")
        assert ell.n_nodes == 3
        assert len(ell.edges) == 3

    def test_line_graph_node_count_matches_independent_parse(self):
        # Throwaway oracle: Python's literal parser counts the edges.
        tup = ast.literal_eval(BRANCHING_PLF)
        n_edges = sum(len(group) for group in tup)
        lat = parse_lattice(BRANCHING_PLF, format="plf")
        assert lat.n_nodes == n_edges + 2

    def test_tokens_move_onto_nodes(self):
        lat = parse_lattice("((('hello',1.0,1),),(('world',1.0,1),),)", format="plf")
        assert lat.tokens() == ["<s>", "hello", "world", "</s>"]

    def test_log_probabilities(self):
        text = "((('a',-0.6931471805599453,1),('b',-0.6931471805599453,1),),)"
        lat = parse_lattice(text, format="plf", plf_prob="log")
        probs = sorted(e.p for e in lat.out_edges(lat.start))
        assert probs == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_syntax_error_position(self):
        with pytest.raises(LatticeSyntaxError) as err:
            parse_plf("((('a',0.5,1),")
        assert err.value.line == 1
        assert err.value.offset is not None

    def test_offset_beyond_end_rejected(self):
        with pytest.raises(LatticeSyntaxError, match="past the final node"):
            parse_plf("((('a',1.0,5),),)")

    def test_quoted_token_escapes(self):
        ell = parse_plf(r"((('it\'s',1.0,1),),)")
        assert ell.edges[0].token == "it's"

    def test_path_multiset_preserved_through_line_graph(self):
        lat = parse_lattice(BRANCHING_PLF, format="plf")
        # Independent expansion of the PLF: walk the tuple form directly.
        tup = ast.literal_eval(BRANCHING_PLF)

        def walk(state, toks, p):
            if state == len(tup):
                yield tuple(toks), p
                return
            for token, q, off in tup[state]:
                yield from walk(state + off, toks + [token], p * q)

        want = sorted((t, round(p, 12)) for t, p in walk(0, [], 1.0))
        got = sorted((tuple(path_tokens(lat, p)[1:-1]), round(pr, 12))
                     for p, pr in complete_paths(lat))
        assert want == got


class TestDot:
    def test_dot_contains_labels_and_marginals(self):
        lat = scored_branching_lattice()
        dot = to_dot(lat)
        assert dot.startswith("digraph lattice {")
        assert 'label="a\\np=0.4"' in dot
        assert "n0 -> n1" in dot

    def test_dot_escapes_quotes(self):
        from latseq.lattice import Edge, Node
        lat = Lattice([Node(0, 'say "hi"'), Node(1, "x")], [Edge(0, 1, 1.0)], 0, 1)
        dot = to_dot(lat)
        assert 'say \\"hi\\"' in dot
