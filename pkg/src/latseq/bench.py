"""Speed benchmark harness.

Compares words/second of the self-attentional lattice encoder against the
reference recurrent lattice encoder in train-step (forward + backward)
and single-sentence inference settings, and measures how mask
precomputation time grows with lattice size. All assertions on these
numbers are directional; absolute figures depend on the host.
"""
from __future__ import annotations

import dataclasses
import json
import platform
import time
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import ParameterStore
from .encoder import (EncoderConfig, EncoderStack, encode, lattice_head_masks,
                      lattice_positions)
from .lattice import Lattice, from_sequence
from .masks import probabilistic_masks
from .recurrent import RecurrentLatticeEncoder
from .rng import RandomSource
from .synthetic import SentenceRecord

SELF_ATTENTION = "lattice_self_attention"
RECURRENT = "lattice_recurrent"
TRAIN_STEP = "train_step"
INFERENCE = "inference"


@dataclass(frozen=True)
class BenchReport:
    encoder: str
    phase: str
    words_per_second: float
    lattice_density: float
    runs: int
    hardware: str

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


def hardware_descriptor() -> str:
    return (f"{platform.machine()} {platform.system()} "
            f"python{platform.python_version()} numpy{np.__version__}")


def _sa_encoder(vocab_size: int, config: EncoderConfig, seed: int = 5):
    store = ParameterStore()
    stack = EncoderStack(config, vocab_size, store, RandomSource(seed))
    return stack


def _token_ids(lat: Lattice, token_to_id: dict) -> np.ndarray:
    return np.array([token_to_id.setdefault(t, len(token_to_id)) for t in lat.tokens()],
                    dtype=np.int64)


def bench_encoders(records: list[SentenceRecord], phase: str = TRAIN_STEP,
                   runs: int = 3, d_model: int = 64,
                   encoders: tuple[str, ...] = (SELF_ATTENTION, RECURRENT)) -> list[BenchReport]:
    """Measure words/sec per encoder, averaged over `runs` repetitions.

    A train step is a full forward plus backward from a scalar pooled
    loss; inference is forward only, one sentence at a time. Words are
    reference (true-path) tokens.
    """
    if runs < 3:
        raise ValueError("reports must average at least 3 runs")
    token_to_id: dict[str, int] = {}
    ids = [_token_ids(rec.lattice, token_to_id) for rec in records]
    vocab_size = len(token_to_id) + 1
    words = sum(len(rec.source) for rec in records)
    density = sum(rec.lattice.n_nodes for rec in records) / max(words, 1)
    config = EncoderConfig(d_model=d_model, n_heads=4, n_layers=3, d_ff=4 * d_model,
                           dropout=0.0, mask_kind="probabilistic", direction="directional")
    reports = []
    for name in encoders:
        if name == SELF_ATTENTION:
            stack = _sa_encoder(vocab_size, config)
            # Masks and positions are precomputed per lattice, as at
            # data-loading time in training; the timed step is the model.
            prepared = [(tid, lattice_positions(rec.lattice, config),
                         lattice_head_masks(rec.lattice, config))
                        for rec, tid in zip(records, ids)]

            def run_one(item, _stack=stack):
                tid, pos, masks = item
                out = encode(tid, pos, masks, _stack, mode="infer")
                if phase == TRAIN_STEP:
                    ag.backward(ag.sum_all(out))
        elif name == RECURRENT:
            store = ParameterStore()
            rec_enc = RecurrentLatticeEncoder(vocab_size, d_model, store, RandomSource(6))
            prepared = [(rec.lattice, tid) for rec, tid in zip(records, ids)]

            def run_one(item, _enc=rec_enc):
                lat, tid = item
                out = _enc.encode(lat, tid)
                if phase == TRAIN_STEP:
                    ag.backward(ag.sum_all(out))
        else:
            raise ValueError(f"unknown encoder {name!r}")

        times = []
        for _ in range(runs):
            t0 = time.perf_counter()
            for item in prepared:
                run_one(item)
            times.append(time.perf_counter() - t0)
        mean_time = sum(times) / len(times)
        reports.append(BenchReport(
            encoder=name, phase=phase, words_per_second=words / mean_time,
            lattice_density=density, runs=runs, hardware=hardware_descriptor()))
    return reports


def mask_scaling_exponent(sizes=(100, 200, 400, 800), repeats: int = 3) -> float:
    """Fit the growth exponent of mask precomputation time on chains.

    Times the probabilistic mask DP on chain lattices of the given node
    counts (best of `repeats`), then least-squares fits log t = a log n + b
    and returns a.
    """
    times = []
    for n in sizes:
        lat = from_sequence([f"w{i}" for i in range(n - 2)])
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            probabilistic_masks(lat)
            best = min(best, time.perf_counter() - t0)
        times.append(best)
    logs_n = np.log(np.array(sizes, dtype=float))
    logs_t = np.log(np.array(times))
    a, _b = np.polyfit(logs_n, logs_t, 1)
    return float(a)
