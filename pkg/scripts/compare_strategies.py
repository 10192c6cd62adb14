"""Train every strategy on one benchmark and partition, writing per-round metrics.

Outputs ``<out>/<dataset>-<partition>.csv`` (one row per strategy and round)
and a ``...summary.csv`` with final accuracy, total upstream bits and rounds
to the target accuracy.  Strategy options keep their StrategyConfig defaults.

    python scripts/compare_strategies.py --dataset synthetic --partition sorted
    python scripts/compare_strategies.py --dataset mnist --rounds 100 --strategies fedavg stc
"""

import argparse
import logging
from pathlib import Path

from fedsim import engine, experiments, report
from fedsim.strategies import KINDS

def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dataset", choices=["synthetic", "mnist"], default="synthetic")
    parser.add_argument("--partition", choices=["iid", "sorted"], default="sorted")
    parser.add_argument("--shards", type=int, default=2, help="shards per client for the sorted partition")
    parser.add_argument("--rounds", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--target", type=float, default=0.8)
    parser.add_argument("--strategies", nargs="+", choices=KINDS, default=list(KINDS))
    parser.add_argument("--out", type=Path, default=Path("runs"))
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    if args.dataset == "mnist":
        train, test = experiments.mnist_benchmark()
        hidden = experiments.MNIST_HIDDEN
    else:
        train, test = experiments.synthetic_benchmark()
        hidden = experiments.SYNTH_HIDDEN

    results = []
    for kind in args.strategies:
        cfg = experiments.federated(
            kind, hidden, partition=args.partition, shards_per_client=args.shards,
            rounds_max=args.rounds, seed=args.seed,
        )
        res = engine.run_federated(cfg, train, test)
        results.append((kind, res))

    stem = args.out / f"{args.dataset}-{args.partition}"
    report.write_text(stem.with_suffix(".csv"), report.metrics_csv(results))
    report.write_text(Path(f"{stem}.summary.csv"), report.comparison_table(results, args.target))
    print(report.comparison_table(results, args.target), end="")


if __name__ == "__main__":
    main()
