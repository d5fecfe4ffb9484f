"""Vocabulary and corpus plumbing.

A corpus example carries a lattice together with everything the model
needs precomputed at load time: node token ids, per-head attention masks,
node positions, log marginals for the cross-attention bias, and target
token ids. Masks are computed once per lattice and cached on the example,
so the per-step training cost stays quadratic in the node count.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .encoder import EncoderConfig, lattice_head_masks, lattice_positions
from .lattice import END_TOKEN, START_TOKEN, Lattice, from_sequence
from .lattice_io import lattice_from_json
from .masks import compute_marginals

UNK_TOKEN = "<unk>"
SPECIALS = (START_TOKEN, END_TOKEN, UNK_TOKEN)


class Vocab:
    def __init__(self, tokens: list[str]):
        for s in SPECIALS:
            if s not in tokens:
                raise ValueError(f"vocabulary must contain {s!r}")
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.unk_id = self.index[UNK_TOKEN]
        self.bos_id = self.index[START_TOKEN]
        self.eos_id = self.index[END_TOKEN]

    @classmethod
    def build(cls, sequences, min_count: int = 1) -> "Vocab":
        """Vocabulary over all tokens seen at least min_count times;
        rarer tokens fall back to the unk entry."""
        counts = Counter()
        for seq in sequences:
            counts.update(seq)
        kept = sorted(t for t, c in counts.items() if c >= min_count and t not in SPECIALS)
        return cls(list(SPECIALS) + kept)

    def __len__(self):
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self.index.get(token, self.unk_id)

    def ids(self, tokens) -> np.ndarray:
        return np.array([self.id(t) for t in tokens], dtype=np.int64)

    def decode(self, ids) -> list[str]:
        return [self.tokens[int(i)] for i in ids]


@dataclass
class Example:
    lattice: Lattice
    src_ids: np.ndarray               # encoder token id per node, node-id order
    positions: np.ndarray
    head_masks: list[np.ndarray]
    log_marginals: np.ndarray         # (1, |V|) additive cross-attention bias
    target_tokens: list[str]
    target_ids: np.ndarray            # without sentinels

    @property
    def n_nodes(self) -> int:
        return self.lattice.n_nodes


def make_example(lat: Lattice, target_tokens: list[str], src_vocab: Vocab,
                 tgt_vocab: Vocab, config: EncoderConfig) -> Example:
    marg = compute_marginals(lat)
    return Example(
        lattice=lat,
        src_ids=src_vocab.ids(lat.tokens()),
        positions=lattice_positions(lat, config),
        head_masks=lattice_head_masks(lat, config),
        log_marginals=np.log(marg)[None, :],
        target_tokens=list(target_tokens),
        target_ids=tgt_vocab.ids(target_tokens),
    )


def prepare_corpus(lattices: list[Lattice], targets: list[list[str]], src_vocab: Vocab,
                   tgt_vocab: Vocab, config: EncoderConfig) -> list[Example]:
    if len(lattices) != len(targets):
        raise ValueError(f"{len(lattices)} lattices vs {len(targets)} target lines")
    return [make_example(l, t, src_vocab, tgt_vocab, config)
            for l, t in zip(lattices, targets)]


def read_lattice_jsonl(path: str) -> list[Lattice]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(lattice_from_json(line))
    return out


def read_token_lines(path: str) -> list[list[str]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            out.append(line.split())
    return out


def sequences_to_lattices(lines: list[list[str]]) -> list[Lattice]:
    """Treat plain sequences as single-path lattices with unit probabilities."""
    return [from_sequence(toks) for toks in lines]
