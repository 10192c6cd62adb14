"""Sweep the CMFL relevance threshold and report accuracy against upstream traffic.

Useful for picking a threshold: too high and no client ever passes the
relevance check after the first round, so the model stops moving.

    python scripts/cmfl_threshold_sweep.py --thresholds 0.4 0.5 0.6 0.7 0.8
"""

import argparse
import csv
import sys

from fedsim import engine, experiments


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--thresholds", type=float, nargs="+", default=[0.4, 0.5, 0.6, 0.7, 0.8])
    parser.add_argument("--partition", choices=["iid", "sorted"], default="sorted")
    parser.add_argument("--rounds", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    train, test = experiments.synthetic_benchmark()
    writer = csv.writer(sys.stdout)
    writer.writerow(["threshold", "final_accuracy", "bits_up", "stalled_rounds"])
    for t in args.thresholds:
        cfg = experiments.federated("cmfl", partition=args.partition, rounds_max=args.rounds,
                                    seed=args.seed, cmfl_threshold=t)
        res = engine.run_federated(cfg, train, test)
        stalled = sum(1 for r in res.records[1:] if r.bits_up == 0)
        writer.writerow([t, f"{res.records[-1].test_accuracy:.4f}", res.total_bits_up, stalled])


if __name__ == "__main__":
    main()
