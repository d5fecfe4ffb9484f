"""Desk-scale experiments: main comparison, ablations, pretraining effect.

These are the runnable studies behind the repository's claims. They are
shared by the scripts/ entry points and the acceptance tests; everything
is deterministic given the seed.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .data import Example, Vocab, prepare_corpus
from .encoder import EncoderConfig
from .lattice import from_sequence
from .rng import RandomSource
from .synthetic import GenConfig, SentenceRecord, generate
from .training import TrainSchedule, pretrain_finetune, train
from .translator import ModelConfig, TranslationModel


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 13
    n_train: int = 2000
    n_dev: int = 200
    n_test: int = 200
    gen: GenConfig = field(default_factory=lambda: GenConfig(
        confusion_width=3, noise_margin=0.18, min_len=5, max_len=9))
    encoder: EncoderConfig = field(default_factory=lambda: EncoderConfig(
        d_model=64, n_heads=4, n_layers=3, d_ff=256, dropout=0.1,
        mask_kind="probabilistic", direction="directional",
        positions="longest_path", max_position=128))
    d_hidden: int = 64
    d_tgt_emb: int = 64
    decoder_dropout: float = 0.2
    pretrain_epochs: int = 8
    finetune_epochs: int = 8
    patience: int = 5
    batch_sentences: int = 16
    warmup_steps: int = 200
    beam: int = 1


# Canonical scales used by scripts/ and the acceptance suite. DESK_SCALE
# is the headline comparison; the ablation/pretraining studies run a
# smaller corpus to keep 3-seed sweeps affordable.
DESK_SCALE = ExperimentConfig()
ABLATION_SCALE = ExperimentConfig(
    n_train=1200, n_dev=150, n_test=200,
    pretrain_epochs=10, finetune_epochs=8, patience=5, warmup_steps=150)
PRETRAIN_SCALE = ABLATION_SCALE


def _split_corpora(cfg: ExperimentConfig) -> tuple[list, list, list]:
    total = cfg.n_train + cfg.n_dev + cfg.n_test
    gen = dataclasses.replace(cfg.gen, seed=cfg.seed, n_sentences=total)
    records, _stats = generate(gen)
    return (records[:cfg.n_train],
            records[cfg.n_train:cfg.n_train + cfg.n_dev],
            records[cfg.n_train + cfg.n_dev:])


def _vocabs(records: list[SentenceRecord]) -> tuple[Vocab, Vocab]:
    src_vocab = Vocab.build([rec.lattice.tokens() for rec in records])
    tgt_vocab = Vocab.build([rec.target for rec in records])
    return src_vocab, tgt_vocab


def _examples(records, kind: str, src_vocab, tgt_vocab, enc_cfg) -> list[Example]:
    """kind selects the encoder input: lattice | best | oracle."""
    if kind == "lattice":
        lats = [rec.lattice for rec in records]
    elif kind == "best":
        lats = [from_sequence(rec.best) for rec in records]
    elif kind == "oracle":
        lats = [from_sequence(rec.source) for rec in records]
    else:
        raise ValueError(f"unknown input kind {kind!r}")
    targets = [rec.target for rec in records]
    return prepare_corpus(lats, targets, src_vocab, tgt_vocab, enc_cfg)


def _schedules(cfg: ExperimentConfig) -> tuple[TrainSchedule, TrainSchedule]:
    pre = TrainSchedule(lr_policy="warmup_decay", warmup_steps=cfg.warmup_steps,
                        batch_sentences=cfg.batch_sentences,
                        patience_epochs=cfg.patience, max_epochs=cfg.pretrain_epochs)
    fine = dataclasses.replace(pre, max_epochs=cfg.finetune_epochs)
    return pre, fine


def _new_model(cfg: ExperimentConfig, enc_cfg: EncoderConfig, src_vocab, tgt_vocab,
               seed_label: str) -> TranslationModel:
    mc = ModelConfig(encoder=enc_cfg, d_hidden=cfg.d_hidden, d_tgt_emb=cfg.d_tgt_emb,
                     decoder_dropout=cfg.decoder_dropout)
    return TranslationModel(mc, src_vocab, tgt_vocab, RandomSource(cfg.seed).split(seed_label))


def run_main_comparison(cfg: ExperimentConfig | None = None, log=print) -> dict:
    """Train the sequential baseline and the lattice model; evaluate the
    lattice model on lattices, 1-best chains, and oracle chains.

    Returns test token accuracies keyed by condition.
    """
    cfg = cfg or ExperimentConfig()
    train_recs, dev_recs, test_recs = _split_corpora(cfg)
    src_vocab, tgt_vocab = _vocabs(train_recs)
    enc_cfg = cfg.encoder
    pre, fine = _schedules(cfg)
    rng = RandomSource(cfg.seed)

    train_oracle = _examples(train_recs, "oracle", src_vocab, tgt_vocab, enc_cfg)
    train_lat = _examples(train_recs, "lattice", src_vocab, tgt_vocab, enc_cfg)
    dev_lat = _examples(dev_recs, "lattice", src_vocab, tgt_vocab, enc_cfg)
    dev_best = _examples(dev_recs, "best", src_vocab, tgt_vocab, enc_cfg)

    # Sequential baseline: trained on clean reference sequences, tested on
    # 1-best chains (it never sees lattices).
    seq_model = _new_model(cfg, enc_cfg, src_vocab, tgt_vocab, "seq_model")
    seq_sched = dataclasses.replace(pre, max_epochs=cfg.pretrain_epochs + cfg.finetune_epochs)
    train(seq_model, train_oracle, seq_sched, dev=dev_best, rng=rng.split("seq_train"))
    log("sequential baseline trained")

    # Lattice model: pretrain on the same clean sequences, finetune on lattices.
    lat_model = _new_model(cfg, enc_cfg, src_vocab, tgt_vocab, "lat_model")
    pretrain_finetune(lat_model, train_oracle, train_lat, dev_lat, pre, fine,
                      rng=rng.split("lat_train"))
    log("lattice model trained")

    conditions = {
        "seq_on_best": (seq_model, "best"),
        "lattice_on_lattice": (lat_model, "lattice"),
        "lattice_on_best": (lat_model, "best"),
        "lattice_on_oracle": (lat_model, "oracle"),
    }
    results = {}
    for name, (model, kind) in conditions.items():
        test = _examples(test_recs, kind, src_vocab, tgt_vocab, enc_cfg)
        results[name] = model.evaluate(test, beam=cfg.beam)["token_accuracy"]
        log(f"{name}: {results[name]:.4f}")
    return results


def run_lattice_condition(cfg: ExperimentConfig, enc_cfg: EncoderConfig,
                          seed_label: str) -> float:
    """Pretrain + finetune one lattice model under enc_cfg; test accuracy."""
    train_recs, dev_recs, test_recs = _split_corpora(cfg)
    src_vocab, tgt_vocab = _vocabs(train_recs)
    pre, fine = _schedules(cfg)
    rng = RandomSource(cfg.seed).split(seed_label)

    train_oracle = _examples(train_recs, "oracle", src_vocab, tgt_vocab, enc_cfg)
    train_lat = _examples(train_recs, "lattice", src_vocab, tgt_vocab, enc_cfg)
    dev_lat = _examples(dev_recs, "lattice", src_vocab, tgt_vocab, enc_cfg)
    test_lat = _examples(test_recs, "lattice", src_vocab, tgt_vocab, enc_cfg)

    model = _new_model(cfg, enc_cfg, src_vocab, tgt_vocab, f"{seed_label}_model")
    pretrain_finetune(model, train_oracle, train_lat, dev_lat, pre, fine, rng=rng)
    return model.evaluate(test_lat, beam=cfg.beam)["token_accuracy"]


ABLATION_AXES = {
    "mask_kind": ("probabilistic", "binary"),
    "positions": ("longest_path", "topological"),
}


def run_ablation(cfg: ExperimentConfig | None = None, seeds=(1, 2, 3), log=print) -> dict:
    """Flip one encoder switch at a time against the full configuration.

    All settings of a seed share the corpus, the parameter initialization,
    and the training randomness (mask kind and position scheme change
    neither parameter shapes nor the chain-input pretraining phase), so
    each flipped run is a paired comparison against the full
    configuration, which is trained once per seed and reused across axes.
    Returns per-axis accuracy lists across seeds.
    """
    cfg = cfg or ExperimentConfig()
    baseline: dict[int, float] = {}
    for seed in seeds:
        scfg = dataclasses.replace(cfg, seed=cfg.seed + seed)
        baseline[seed] = run_lattice_condition(scfg, cfg.encoder, "ablation")
        log(f"full config seed {seed}: {baseline[seed]:.4f}")
    out: dict = {}
    for axis, (good, bad) in ABLATION_AXES.items():
        good_accs, bad_accs = [], []
        for seed in seeds:
            scfg = dataclasses.replace(cfg, seed=cfg.seed + seed)
            enc_bad = dataclasses.replace(cfg.encoder, **{axis: bad})
            a_bad = run_lattice_condition(scfg, enc_bad, "ablation")
            good_accs.append(baseline[seed])
            bad_accs.append(a_bad)
            log(f"{axis} seed {seed}: {good}={baseline[seed]:.4f} {bad}={a_bad:.4f}")
        out[axis] = {"better": good_accs, "worse": bad_accs,
                     "settings": (good, bad)}
    return out


def run_pretraining_effect(cfg: ExperimentConfig | None = None, seeds=(1, 2, 3),
                           log=print) -> dict:
    """Pretrain-then-finetune vs. training on lattices from scratch with
    the same total epoch budget; dev accuracies per seed."""
    cfg = cfg or ExperimentConfig()
    pretrained, scratch = [], []
    for seed in seeds:
        scfg = dataclasses.replace(cfg, seed=cfg.seed + seed)
        train_recs, dev_recs, _ = _split_corpora(scfg)
        src_vocab, tgt_vocab = _vocabs(train_recs)
        enc_cfg = scfg.encoder
        pre, fine = _schedules(scfg)
        train_oracle = _examples(train_recs, "oracle", src_vocab, tgt_vocab, enc_cfg)
        train_lat = _examples(train_recs, "lattice", src_vocab, tgt_vocab, enc_cfg)
        dev_lat = _examples(dev_recs, "lattice", src_vocab, tgt_vocab, enc_cfg)

        m1 = _new_model(scfg, enc_cfg, src_vocab, tgt_vocab, "pretrained")
        pretrain_finetune(m1, train_oracle, train_lat, dev_lat, pre, fine,
                          rng=RandomSource(scfg.seed).split("pf"))
        a1 = m1.evaluate(dev_lat, beam=cfg.beam)["token_accuracy"]

        m2 = _new_model(scfg, enc_cfg, src_vocab, tgt_vocab, "scratch")
        scratch_sched = dataclasses.replace(
            fine, max_epochs=scfg.pretrain_epochs + scfg.finetune_epochs,
            phase="finetune_lattice")
        train(m2, train_lat, scratch_sched, dev=dev_lat,
              rng=RandomSource(scfg.seed).split("scratch"))
        a2 = m2.evaluate(dev_lat, beam=cfg.beam)["token_accuracy"]
        pretrained.append(a1)
        scratch.append(a2)
        log(f"seed {seed}: pretrained={a1:.4f} scratch={a2:.4f}")
    return {"pretrained": pretrained, "scratch": scratch}
