"""Synthetic noisy-lattice corpus generator.

Sources are random walks over a symbol vocabulary whose next symbol is
always the current one advanced by a small step, so local context
disambiguates corrupted positions. Each source token is expanded into a
2..width-way confusion set over a shared slot distribution
(Dirichlet-sampled); with probability `noise_margin` the top-scoring
candidate of a slot is a distractor rather than the true token, so the
1-best path disagrees with the truth at roughly that per-token rate while
the full lattice always contains it. Targets apply a fixed symbol
bijection to the true source and reverse it.

Everything is a pure function of the seed: the same seed reproduces the
corpus byte for byte.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .lattice import END_TOKEN, START_TOKEN, Edge, Lattice, Node
from .lattice_io import lattice_to_json
from .rng import RandomSource


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    n_sentences: int = 1000
    confusion_width: int = 3
    noise_margin: float = 0.1
    vocab_size: int = 60
    min_len: int = 5
    max_len: int = 9
    step_choices: tuple[int, ...] = (1, 2)
    width_one_prob: float = 0.3   # chance a position stays unambiguous
    dirichlet_alpha: float = 0.8  # < 1 makes slot scores mildly peaky
    map_mul: int = 7      # target symbol bijection: i -> (i*map_mul + map_add) % vocab
    map_add: int = 11

    def __post_init__(self):
        if self.confusion_width < 1:
            raise ValueError("confusion_width must be >= 1")
        if not (0.0 <= self.noise_margin < 1.0):
            raise ValueError("noise_margin must be in [0, 1)")
        if not (0.0 <= self.width_one_prob < 1.0):
            raise ValueError("width_one_prob must be in [0, 1)")
        if np.gcd(self.map_mul, self.vocab_size) != 1:
            raise ValueError("map_mul must be coprime with vocab_size for a bijection")


@dataclass
class SentenceRecord:
    lattice: Lattice
    source: list[str]      # true source tokens (the oracle path)
    best: list[str]        # highest-probability path tokens
    target: list[str]


@dataclass
class GenStats:
    n_sentences: int = 0
    n_tokens: int = 0
    disagreeing_tokens: int = 0
    n_nodes: int = 0

    @property
    def disagreement_rate(self) -> float:
        return self.disagreeing_tokens / max(self.n_tokens, 1)

    @property
    def lattice_density(self) -> float:
        return self.n_nodes / max(self.n_tokens, 1)

    def to_dict(self) -> dict:
        return {
            "n_sentences": self.n_sentences,
            "n_tokens": self.n_tokens,
            "onebest_token_disagreement_rate": self.disagreement_rate,
            "lattice_density_nodes_per_token": self.lattice_density,
        }


def src_token(i: int) -> str:
    return f"s{i:02d}"


def tgt_token(i: int) -> str:
    return f"t{i:02d}"


def _sentence(cfg: GenConfig, rng: RandomSource) -> SentenceRecord:
    length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
    sym = int(rng.integers(0, cfg.vocab_size))
    symbols = [sym]
    for _ in range(length - 1):
        sym = (sym + int(rng.choice(list(cfg.step_choices)))) % cfg.vocab_size
        symbols.append(sym)

    slots: list[list[int]] = []       # candidate symbol ids per position
    probs: list[np.ndarray] = []      # matching slot distribution
    for true in symbols:
        confident = cfg.confusion_width == 1 or rng.uniform() < cfg.width_one_prob
        if confident:
            slots.append([true])
            probs.append(np.array([1.0]))
            continue
        width = int(rng.integers(2, cfg.confusion_width + 1))
        others = [s for s in range(cfg.vocab_size) if s != true]
        distract = [int(x) for x in rng.choice(others, size=width - 1, replace=False)]
        cands = [true] + distract
        p = rng.dirichlet([cfg.dirichlet_alpha] * width)
        p = (p + 1e-6) / (p + 1e-6).sum()
        order = list(np.argsort(-p))  # slots of p from largest to smallest
        flip = width > 1 and rng.uniform() < cfg.noise_margin
        # Assign: the largest probability goes to the true token unless
        # flipped, in which case a random distractor takes it.
        assign = [0] * width
        targets = list(range(width))
        if flip:
            top = int(rng.integers(1, width))
        else:
            top = 0
        targets.remove(top)
        rng.shuffle(targets)
        receivers = [top] + targets
        for rank, receiver in enumerate(receivers):
            assign[receiver] = order[rank]
        slot_p = np.array([p[assign[i]] for i in range(width)])
        slots.append(cands)
        probs.append(slot_p)

    # Confusion network: full connectivity between adjacent slots; the
    # transition probability into a node is its slot probability.
    nodes = [Node(0, START_TOKEN)]
    ids: list[list[int]] = []
    next_id = 1
    for cands in slots:
        ids.append(list(range(next_id, next_id + len(cands))))
        for c in cands:
            nodes.append(Node(next_id, src_token(c)))
            next_id += 1
    end_id = next_id
    nodes.append(Node(end_id, END_TOKEN))
    edges: list[Edge] = []
    for j, p in zip(ids[0], probs[0]):
        edges.append(Edge(0, j, float(p)))
    for t in range(1, len(slots)):
        for i in ids[t - 1]:
            for j, p in zip(ids[t], probs[t]):
                edges.append(Edge(i, j, float(p)))
    for i in ids[-1]:
        edges.append(Edge(i, end_id, 1.0))
    lattice = Lattice(nodes, edges, 0, end_id)

    best = [slots[t][int(np.argmax(probs[t]))] for t in range(len(slots))]
    mapped = [(s * cfg.map_mul + cfg.map_add) % cfg.vocab_size for s in symbols]
    target = [tgt_token(m) for m in reversed(mapped)]
    return SentenceRecord(
        lattice=lattice,
        source=[src_token(s) for s in symbols],
        best=[src_token(s) for s in best],
        target=target,
    )


def generate(cfg: GenConfig) -> tuple[list[SentenceRecord], GenStats]:
    root = RandomSource(cfg.seed)
    records = []
    stats = GenStats()
    for i in range(cfg.n_sentences):
        rec = _sentence(cfg, root.split(f"sentence{i}"))
        records.append(rec)
        stats.n_sentences += 1
        stats.n_tokens += len(rec.source)
        stats.n_nodes += rec.lattice.n_nodes
        stats.disagreeing_tokens += sum(1 for a, b in zip(rec.source, rec.best) if a != b)
    return records, stats


def write_corpus(records: list[SentenceRecord], stats: GenStats, out_dir: str) -> dict:
    """Emit lattice/1-best/oracle/target files plus a stats report."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "lattices": os.path.join(out_dir, "lattices.jsonl"),
        "best": os.path.join(out_dir, "best.txt"),
        "oracle": os.path.join(out_dir, "oracle.txt"),
        "target": os.path.join(out_dir, "target.txt"),
        "stats": os.path.join(out_dir, "stats.json"),
    }
    with open(paths["lattices"], "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(lattice_to_json(rec.lattice) + "\n")
    for key, attr in (("best", "best"), ("oracle", "source"), ("target", "target")):
        with open(paths[key], "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(" ".join(getattr(rec, attr)) + "\n")
    with open(paths["stats"], "w", encoding="utf-8") as fh:
        json.dump(stats.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
