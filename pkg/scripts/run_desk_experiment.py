#!/usr/bin/env python3
"""Main desk-scale comparison: lattice model vs sequential baseline.

Trains a sequential self-attention baseline on clean reference sequences
and a lattice model (sequential pretraining + lattice finetuning), then
reports test token accuracy of:
  - the sequential baseline on 1-best inputs,
  - the lattice model on full lattices / 1-best chains / oracle chains.
"""
import argparse
import dataclasses
import json
import time

from latseq.experiments import ExperimentConfig, run_main_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=13)
    ap.add_argument("--n-train", type=int, default=2000)
    ap.add_argument("--n-test", type=int, default=200)
    ap.add_argument("--pretrain-epochs", type=int, default=8)
    ap.add_argument("--finetune-epochs", type=int, default=8)
    ap.add_argument("--out", help="write results JSON here")
    args = ap.parse_args()

    cfg = dataclasses.replace(
        ExperimentConfig(), seed=args.seed, n_train=args.n_train, n_test=args.n_test,
        pretrain_epochs=args.pretrain_epochs, finetune_epochs=args.finetune_epochs,
        warmup_steps=200, patience=5)
    t0 = time.time()
    results = run_main_comparison(cfg)
    results["runtime_seconds"] = round(time.time() - t0, 1)
    print(json.dumps(results, indent=2, sort_keys=True))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
