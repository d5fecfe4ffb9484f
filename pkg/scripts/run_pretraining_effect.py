#!/usr/bin/env python3
"""Pretraining effect: sequential pretraining + lattice finetuning vs
training on lattices from scratch with the same epoch budget."""
import argparse
import json
import time

from latseq.experiments import PRETRAIN_SCALE, run_pretraining_effect


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--out", help="write results JSON here")
    args = ap.parse_args()

    t0 = time.time()
    res = run_pretraining_effect(PRETRAIN_SCALE, seeds=tuple(args.seeds))
    res["runtime_seconds"] = round(time.time() - t0, 1)
    print(json.dumps(res, indent=2, sort_keys=True))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(res, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
