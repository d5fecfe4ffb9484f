"""Command-line workbench.

Machine-readable results go to stdout, diagnostics to stderr. Exit codes:
0 success, 1 lattice validation/domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bench import bench_encoders, mask_scaling_exponent
from .data import (Vocab, prepare_corpus, read_lattice_jsonl, read_token_lines,
                   sequences_to_lattices)
from .encoder import EncoderConfig
from .lattice import Lattice, LatticeError, linearize, longest_path_positions
from .lattice_io import parse_lattice, to_dot
from .masks import binary_masks, compute_marginals, merge_nondirectional, probabilistic_masks
from .rng import RandomSource
from .synthetic import GenConfig, generate, write_corpus
from .training import TrainSchedule, train
from .translator import ModelConfig, TranslationModel


def _fmt(x: float) -> str:
    if x == -np.inf:
        return "-inf"
    return f"{x:.17g}"


def _read_one_lattice(path: str, fmt: str, plf_prob: str, line_no: int) -> Lattice:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if fmt == "json" and len(lines) == 0:
        raise LatticeError("empty lattice file")
    if line_no < 1 or line_no > len(lines):
        raise LatticeError(f"file has {len(lines)} lattices, requested line {line_no}")
    return parse_lattice(lines[line_no - 1], format=fmt, plf_prob=plf_prob)


def _add_lattice_args(p: argparse.ArgumentParser):
    p.add_argument("file", help="lattice file (one lattice per line)")
    p.add_argument("--format", choices=["json", "plf"], default="json")
    p.add_argument("--plf-prob", choices=["linear", "log"], default="linear",
                   help="how PLF edge scores are stored")
    p.add_argument("--line", type=int, default=1, help="1-based lattice line to use")


def cmd_validate(args) -> int:
    lat = _read_one_lattice(args.file, args.format, args.plf_prob, args.line)
    print(json.dumps({"valid": True, "nodes": lat.n_nodes, "edges": len(lat.edges)}))
    return 0


def cmd_masks(args) -> int:
    lat = _read_one_lattice(args.file, args.format, args.plf_prob, args.line)
    fwd, bwd = binary_masks(lat) if args.kind == "binary" else probabilistic_masks(lat)
    if args.dir == "fwd":
        mask = fwd
    elif args.dir == "bwd":
        mask = bwd
    else:
        mask = merge_nondirectional(fwd, bwd)
    for row in mask.m:
        print("\t".join(_fmt(x) for x in row))
    return 0


def cmd_positions(args) -> int:
    lat = _read_one_lattice(args.file, args.format, args.plf_prob, args.line)
    pos = longest_path_positions(lat)
    for n in lat.nodes:
        print(f"{n.id}\t{n.token}\t{int(pos[n.id])}")
    return 0


def cmd_marginals(args) -> int:
    lat = _read_one_lattice(args.file, args.format, args.plf_prob, args.line)
    marg = compute_marginals(lat)
    for n in lat.nodes:
        print(f"{n.id}\t{n.token}\t{_fmt(marg[n.id])}")
    return 0


def cmd_linearize(args) -> int:
    lat = _read_one_lattice(args.file, args.format, args.plf_prob, args.line)
    print(" ".join(tok for tok, _ in linearize(lat)))
    return 0


def cmd_dot(args) -> int:
    lat = _read_one_lattice(args.file, args.format, args.plf_prob, args.line)
    sys.stdout.write(to_dot(lat))
    return 0


def cmd_gen_data(args) -> int:
    cfg = GenConfig(seed=args.seed, n_sentences=args.n_sentences,
                    confusion_width=args.confusion_width, noise_margin=args.noise_margin,
                    min_len=args.min_len, max_len=args.max_len)
    records, stats = generate(cfg)
    paths = write_corpus(records, stats, args.out_dir)
    print(json.dumps({"files": paths, **stats.to_dict()}, sort_keys=True))
    return 0


def _encoder_config(args) -> EncoderConfig:
    return EncoderConfig(d_model=args.d_model, n_heads=args.n_heads, n_layers=args.n_layers,
                         d_ff=args.d_ff, dropout=args.dropout, mask_kind=args.mask_kind,
                         direction=args.direction, positions=args.positions,
                         max_position=args.max_position)


def _add_model_args(p: argparse.ArgumentParser):
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--n-heads", type=int, default=4)
    p.add_argument("--n-layers", type=int, default=3)
    p.add_argument("--d-ff", type=int, default=256)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--mask-kind", choices=["binary", "probabilistic", "none"],
                   default="probabilistic")
    p.add_argument("--direction", choices=["directional", "nondirectional"],
                   default="directional")
    p.add_argument("--positions", choices=["longest_path", "topological", "none"],
                   default="longest_path")
    p.add_argument("--max-position", type=int, default=128)
    p.add_argument("--d-hidden", type=int, default=64)
    p.add_argument("--d-tgt-emb", type=int, default=64)
    p.add_argument("--decoder-dropout", type=float, default=0.5)


def _load_source(path: str, kind: str) -> list[Lattice]:
    if kind == "lattice":
        return read_lattice_jsonl(path)
    return sequences_to_lattices(read_token_lines(path))


def cmd_train(args) -> int:
    src_lattices = _load_source(args.source, args.source_kind)
    targets = read_token_lines(args.target)
    if args.init:
        model = TranslationModel.load(args.init)
    else:
        src_vocab = Vocab.build([l.tokens() for l in src_lattices], min_count=args.min_count)
        tgt_vocab = Vocab.build(targets, min_count=args.min_count)
        config = ModelConfig(encoder=_encoder_config(args), d_hidden=args.d_hidden,
                             d_tgt_emb=args.d_tgt_emb, decoder_dropout=args.decoder_dropout)
        model = TranslationModel(config, src_vocab, tgt_vocab, RandomSource(args.seed))
    corpus = prepare_corpus(src_lattices, targets, model.src_vocab, model.tgt_vocab,
                            model.config.encoder)
    dev = None
    if args.dev_source and args.dev_target:
        dev_lats = _load_source(args.dev_source, args.source_kind)
        dev = prepare_corpus(dev_lats, read_token_lines(args.dev_target),
                             model.src_vocab, model.tgt_vocab, model.config.encoder)
    schedule = TrainSchedule(
        phase=args.phase, lr_policy=args.lr_policy, fixed_lr=args.fixed_lr,
        warmup_steps=args.warmup_steps, label_smoothing=args.label_smoothing,
        batch_sentences=args.batch, micro_batch=args.micro_batch,
        patience_epochs=args.patience, max_epochs=args.epochs)
    log = train(model, corpus, schedule, dev=dev, rng=RandomSource(args.seed),
                log_path=args.log)
    model.save(args.save)
    summary = {"epochs": len([r for r in log.records if "loss" in r]),
               "best_val_token_accuracy": log.best_metric if dev else None,
               "checkpoint": args.save}
    print(json.dumps(summary))
    return 0


def cmd_translate(args) -> int:
    model = TranslationModel.load(args.ckpt)
    lattices = _load_source(args.input, args.source_kind)
    for lat in lattices:
        print(" ".join(model.translate_lattice(lat, beam=args.beam)))
    return 0


def cmd_eval(args) -> int:
    model = TranslationModel.load(args.ckpt)
    lattices = _load_source(args.source, args.source_kind)
    targets = read_token_lines(args.target)
    corpus = prepare_corpus(lattices, targets, model.src_vocab, model.tgt_vocab,
                            model.config.encoder)
    metrics = model.evaluate(corpus, beam=args.beam)
    print(json.dumps(metrics, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    if args.suite == "masks":
        exponent = mask_scaling_exponent(sizes=tuple(args.sizes))
        print(json.dumps({"suite": "masks", "sizes": args.sizes,
                          "fitted_exponent": exponent}))
        return 0
    records, _ = generate(GenConfig(seed=args.seed, n_sentences=args.n_sentences,
                                    confusion_width=args.confusion_width))
    reports = bench_encoders(records, phase=args.phase, runs=args.runs)
    for rep in reports:
        print(rep.to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="latseq",
                                 description="lattice self-attention workbench")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a lattice file")
    _add_lattice_args(p)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("masks", help="dump a reachability mask as TSV")
    _add_lattice_args(p)
    p.add_argument("--kind", choices=["binary", "prob"], default="prob")
    p.add_argument("--dir", choices=["fwd", "bwd", "nondir"], default="fwd")
    p.set_defaults(fn=cmd_masks)

    p = sub.add_parser("positions", help="longest-path positions per node")
    _add_lattice_args(p)
    p.set_defaults(fn=cmd_positions)

    p = sub.add_parser("marginals", help="marginal probability per node")
    _add_lattice_args(p)
    p.set_defaults(fn=cmd_marginals)

    p = sub.add_parser("linearize", help="tokens in topological order")
    _add_lattice_args(p)
    p.set_defaults(fn=cmd_linearize)

    p = sub.add_parser("dot", help="GraphViz rendering")
    _add_lattice_args(p)
    p.set_defaults(fn=cmd_dot)

    p = sub.add_parser("gen-data", help="generate a synthetic noisy-lattice corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-sentences", type=int, default=1000)
    p.add_argument("--confusion-width", type=int, default=3)
    p.add_argument("--noise-margin", type=float, default=0.1)
    p.add_argument("--min-len", type=int, default=5)
    p.add_argument("--max-len", type=int, default=9)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a translation model (one phase)")
    p.add_argument("--source", required=True, help="lattice jsonl or token text file")
    p.add_argument("--source-kind", choices=["lattice", "text"], default="lattice")
    p.add_argument("--target", required=True)
    p.add_argument("--dev-source")
    p.add_argument("--dev-target")
    p.add_argument("--save", required=True, help="checkpoint path to write")
    p.add_argument("--init", help="checkpoint to continue from (finetuning)")
    p.add_argument("--log", help="JSONL training log path")
    p.add_argument("--phase", choices=["pretrain_sequential", "finetune_lattice"],
                   default="pretrain_sequential")
    p.add_argument("--lr-policy", choices=["warmup_decay", "fixed"], default="warmup_decay")
    p.add_argument("--fixed-lr", type=float, default=1e-4)
    p.add_argument("--warmup-steps", type=int, default=400)
    p.add_argument("--label-smoothing", type=float, default=0.1)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--micro-batch", type=int, default=None)
    p.add_argument("--patience", type=int, default=15)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-count", type=int, default=1,
                   help="tokens rarer than this map to the unk entry")
    _add_model_args(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("translate", help="decode lattices with a trained model")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--source-kind", choices=["lattice", "text"], default="lattice")
    p.add_argument("--beam", type=int, default=8)
    p.set_defaults(fn=cmd_translate)

    p = sub.add_parser("eval", help="token accuracy and BLEU of a trained model")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--source-kind", choices=["lattice", "text"], default="lattice")
    p.add_argument("--target", required=True)
    p.add_argument("--beam", type=int, default=1)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="speed benchmarks")
    p.add_argument("--suite", choices=["encoders", "masks"], default="encoders")
    p.add_argument("--phase", choices=["train_step", "inference"], default="train_step")
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-sentences", type=int, default=30)
    p.add_argument("--confusion-width", type=int, default=3)
    p.add_argument("--sizes", type=int, nargs="+", default=[100, 200, 400])
    p.set_defaults(fn=cmd_bench)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except LatticeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
