#!/usr/bin/env python3
"""Feature ablation: probabilistic vs binary masks, longest-path vs
topological positions; 3 seeds each, medians compared."""
import argparse
import json
import statistics
import time

from latseq.experiments import ABLATION_SCALE, run_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--out", help="write results JSON here")
    args = ap.parse_args()

    t0 = time.time()
    res = run_ablation(ABLATION_SCALE, seeds=tuple(args.seeds))
    summary = {}
    for axis, data in res.items():
        summary[axis] = {
            "settings": data["settings"],
            "better_accs": data["better"],
            "worse_accs": data["worse"],
            "median_margin": statistics.median(data["better"]) - statistics.median(data["worse"]),
        }
    summary["runtime_seconds"] = round(time.time() - t0, 1)
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
