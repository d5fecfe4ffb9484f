"""Lattice-to-sequence translation model.

Couples the masked self-attention encoder with the recurrent
input-feeding decoder and score-biased cross-attention. Provides
label-smoothed training loss, greedy/beam decoding, corpus evaluation,
and bit-exact checkpointing.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import ParameterStore, Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Example, Vocab, make_example
from .decoder import DecoderParams, decode_step, init_state
from .encoder import EncoderConfig, EncoderStack, encode
from .lattice import Lattice
from .metrics import corpus_bleu, token_accuracy
from .rng import RandomSource


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = dataclasses.field(default_factory=EncoderConfig)
    d_hidden: int = 64
    d_tgt_emb: int = 64
    decoder_dropout: float = 0.5

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        enc = EncoderConfig(**d["encoder"])
        rest = {k: v for k, v in d.items() if k != "encoder"}
        return cls(encoder=enc, **rest)


class TranslationModel:
    def __init__(self, config: ModelConfig, src_vocab: Vocab, tgt_vocab: Vocab,
                 rng: RandomSource):
        self.config = config
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.store = ParameterStore()
        self.encoder = EncoderStack(config.encoder, len(src_vocab), self.store,
                                    rng.split("enc_init"))
        self.decoder = DecoderParams(len(tgt_vocab), config.d_tgt_emb, config.d_hidden,
                                     config.encoder.d_model, self.store, rng.split("dec_init"))

    # -- forward passes -------------------------------------------------

    def encode_example(self, ex: Example, mode: str, rng: RandomSource | None = None) -> Tensor:
        return encode(ex.src_ids, ex.positions, ex.head_masks, self.encoder, mode, rng)

    def loss_example(self, ex: Example, label_smoothing: float, mode: str,
                     rng: RandomSource | None = None):
        """Label-smoothed cross entropy, averaged over target positions.

        Returns (scalar loss tensor, token count, teacher-forced correct
        count).
        """
        enc_out = self.encode_example(ex, mode, rng)
        state = init_state(enc_out, self.decoder)
        eps = label_smoothing
        vocab_n = len(self.tgt_vocab)
        targets = list(ex.target_ids) + [self.tgt_vocab.eos_id]
        prev = self.tgt_vocab.bos_id
        total: Tensor | None = None
        correct = 0
        for gold in targets:
            state, logits = decode_step(state, prev, enc_out, ex.log_marginals,
                                        self.decoder, mode, self.config.decoder_dropout, rng)
            logp = ag.log_softmax_rows(logits)
            if int(np.argmax(logits.data[0])) == gold:
                correct += 1
            step_loss = ag.scale(ag.pick(logp, 0, int(gold)), -(1.0 - eps))
            if eps > 0.0:
                step_loss = ag.add(step_loss, ag.scale(ag.sum_all(logp), -eps / vocab_n))
            total = step_loss if total is None else ag.add(total, step_loss)
            prev = int(gold)
        loss = ag.scale(total, 1.0 / len(targets))
        return loss, len(targets), correct

    # -- decoding --------------------------------------------------------

    def _step_logits(self, state, prev, enc_out, log_marginals):
        """Single inference step; split out so tests can wrap the logits."""
        return decode_step(state, prev, enc_out, log_marginals, self.decoder,
                           mode="infer", dropout_rate=self.config.decoder_dropout)

    def translate_example(self, ex: Example, beam: int = 8) -> list[str]:
        """Beam-search decode; beam=1 is greedy argmax rollout.

        Hypotheses are ranked by length-normalized log probability; the
        end token is forced once a hypothesis reaches 2|V|+8 steps.
        """
        if beam < 1:
            raise ValueError("beam size must be >= 1")
        enc_out = self.encode_example(ex, mode="infer")
        max_len = 2 * ex.n_nodes + 8
        eos = self.tgt_vocab.eos_id
        state0 = init_state(enc_out, self.decoder)
        # (ids, logprob, state) live hypotheses; finished: (ids, logprob)
        live = [([self.tgt_vocab.bos_id], 0.0, state0)]
        finished: list[tuple[list[int], float]] = []
        for _ in range(max_len):
            candidates = []
            for ids, lp, state in live:
                new_state, logits = self._step_logits(state, ids[-1], enc_out, ex.log_marginals)
                logp = logits.data[0] - _logsumexp(logits.data[0])
                top = np.argsort(-logp)[:beam]
                for tok in top:
                    candidates.append((ids + [int(tok)], lp + float(logp[tok]), new_state))
            candidates.sort(key=lambda c: c[1], reverse=True)
            live = []
            for ids, lp, state in candidates:
                if ids[-1] == eos:
                    finished.append((ids, lp))
                elif len(live) < beam:
                    live.append((ids, lp, state))
                if len(live) >= beam and len(finished) >= beam:
                    break
            if not live:
                break
        for ids, lp, _ in live:  # length bound hit: force the end token
            finished.append((ids + [eos], lp))
        def norm(item):
            ids, lp = item
            return lp / max(len(ids) - 1, 1)
        best_ids, _ = max(finished, key=norm)
        body = [i for i in best_ids[1:] if i != eos]
        return self.tgt_vocab.decode(body)

    def translate_lattice(self, lat: Lattice, beam: int = 8) -> list[str]:
        ex = make_example(lat, [], self.src_vocab, self.tgt_vocab, self.config.encoder)
        return self.translate_example(ex, beam=beam)

    def evaluate(self, corpus: list[Example], beam: int = 1,
                 compute_bleu: bool = True) -> dict:
        """Greedy (or beam) decode over the corpus; accuracy plus BLEU."""
        hyps = [self.translate_example(ex, beam=beam) for ex in corpus]
        refs = [ex.target_tokens for ex in corpus]
        out = {"token_accuracy": token_accuracy(hyps, refs), "n_sentences": len(corpus)}
        if compute_bleu:
            out["corpus_bleu"] = corpus_bleu(hyps, refs)
        return out

    # -- persistence -----------------------------------------------------

    def save(self, path: str) -> None:
        config = {
            "model": self.config.to_dict(),
            "src_vocab": self.src_vocab.tokens,
            "tgt_vocab": self.tgt_vocab.tokens,
        }
        save_checkpoint(path, self.store, config)

    @classmethod
    def load(cls, path: str) -> "TranslationModel":
        config, params = load_checkpoint(path)
        model = cls(ModelConfig.from_dict(config["model"]),
                    Vocab(config["src_vocab"]), Vocab(config["tgt_vocab"]),
                    RandomSource(0))
        model.store.load_state(params)
        return model


def _logsumexp(v: np.ndarray) -> float:
    m = float(np.max(v))
    return m + float(np.log(np.exp(v - m).sum()))
