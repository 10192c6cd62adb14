"""Command line entry point: ``fedsim {run,compare,gamma,partition} --config PATH``.

Exit codes: 0 success, 1 configuration problem, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Optional

from fedsim import data, engine, gamma, report
from fedsim.config import ExperimentSpec, parse_config
from fedsim.errors import (
    ComparisonError,
    ConfigError,
    ConsistencyError,
    FedSimError,
    FormatError,
    PartitionError,
)
from fedsim.experiments import pretrained_logreg

log = logging.getLogger("fedsim")

CONFIG_ERRORS = (ConfigError, FormatError, ConsistencyError, PartitionError, ComparisonError)


def load_datasets(spec: ExperimentSpec) -> tuple[data.Dataset, data.Dataset]:
    d = spec.data
    try:
        if d.source == "synthetic":
            full = data.synth_generate(d.classes, d.per_class, d.dim, d.seed)
            train, test = data.train_test_split(full, d.test_fraction, d.seed)
        elif d.source == "mnist":
            from fedsim import mnist

            directory = spec.base_dir / d.dir if d.dir else None
            train, test = mnist.load_mnist(directory)
        else:
            p = lambda name: spec.base_dir / name  # noqa: E731
            train = data.load_idx(p(d.train_images), p(d.train_labels), d.classes)
            test = data.load_idx(p(d.test_images), p(d.test_labels), d.classes)
    except FileNotFoundError as exc:
        raise ConfigError(f"data file not found: {exc.filename}", "data") from exc
    if d.train_limit is not None:
        train = train.subset(range(min(d.train_limit, len(train))))
    return train, test


def _out_dir(spec: ExperimentSpec, args) -> Path:
    if args.out:
        return Path(args.out)
    if spec.output:
        return spec.base_dir / spec.output
    return Path("runs")


def _apply_seed(spec: ExperimentSpec, seed: Optional[int]) -> ExperimentSpec:
    if seed is None:
        return spec
    fed = dataclasses.replace(spec.federated, seed=seed)
    return dataclasses.replace(spec, federated=fed, gamma=dataclasses.replace(spec.gamma, seed=seed))


def cmd_run(spec: ExperimentSpec, out: Path) -> int:
    train, test = load_datasets(spec)
    result = engine.run_federated(spec.federated, train, test)
    label = spec.federated.strategy.kind
    csv_path = report.write_text(out / f"{spec.name}.csv", report.metrics_csv([(label, result)]))
    report.write_json(out / f"{spec.name}.summary.json", report.summary(result, spec.federated.target_accuracy))
    log.info("wrote %s (%.1fs)", csv_path, result.wall_time)
    return 0


def _comparable(a: ExperimentSpec, b: ExperimentSpec) -> bool:
    fa, fb = a.federated, b.federated
    return (
        a.data == b.data
        and (fa.partition, fa.shards_per_client, fa.n_clients, fa.seed)
        == (fb.partition, fb.shards_per_client, fb.n_clients, fb.seed)
    )


def cmd_compare(specs: list[ExperimentSpec], out: Path, target: float = 0.8) -> int:
    if len(specs) < 2:
        raise ComparisonError("compare needs at least two configs")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ComparisonError(f"experiment names must be unique, got {names}")
    for other in specs[1:]:
        if not _comparable(specs[0], other):
            raise ComparisonError(
                f"{other.name} does not share the dataset and partition of {specs[0].name}"
            )
    train, test = load_datasets(specs[0])
    results = [(s.name, engine.run_federated(s.federated, train, test)) for s in specs]
    report.write_text(out / "compare.csv", report.metrics_csv(results))
    report.write_text(out / "compare_summary.csv", report.comparison_table(results, target))
    return 0


def cmd_gamma(spec: ExperimentSpec, out: Path) -> int:
    train, _ = load_datasets(spec)
    g = spec.gamma
    probe = train.subset(range(min(g.subset, len(train)))) if g.subset else train
    f = spec.federated
    params = pretrained_logreg(probe, g.pretrain_epochs, f.batch_size, f.eta, g.seed)
    results = [
        gamma.gamma_estimate(params, probe, g.batch_sizes, g.trials, g.seed, mode)
        for mode in ("iid-sample", "single-class")
    ]
    rows, flags = gamma.gamma_report(results)
    report.write_text(out / f"{spec.name}.gamma.csv", report.gamma_csv(rows))
    report.write_json(out / f"{spec.name}.gamma.summary.json", {"grows_with_batch_size": flags})
    return 0


def cmd_partition(spec: ExperimentSpec, out: Path) -> int:
    train, _ = load_datasets(spec)
    plan = engine.build_partition(spec.federated, train)
    report.write_text(out / f"{spec.name}.partition.json", plan.to_json() + "\n")
    report.write_text(out / f"{spec.name}.histogram.csv", report.histogram_csv(data.label_histograms(train, plan)))
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage mistakes are configuration errors (exit 1), not runtime failures
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser = _Parser(prog="fedsim", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_text in [
        ("run", "run one federated experiment and write its metrics CSV"),
        ("compare", "run several experiments on the same data and merge their metrics"),
        ("gamma", "estimate mini-batch sign-agreement probabilities"),
        ("partition", "export a client partition and its label histograms"),
    ]:
        p = sub.add_parser(name, help=help_text, parents=[common])
        p.add_argument("--config", action="append" if name == "compare" else "store", required=True)
        p.add_argument("--out", help="output directory (default: config 'output' or ./runs)")
        p.add_argument("--seed", type=int, help="override the run seed")
        if name == "compare":
            p.add_argument("--target", type=float, default=0.8, help="accuracy for rounds-to-target (default 0.8)")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "compare":
            specs = [_apply_seed(parse_config(c), args.seed) for c in args.config]
            return cmd_compare(specs, _out_dir(specs[0], args), args.target)
        spec = _apply_seed(parse_config(args.config), args.seed)
        out = _out_dir(spec, args)
        return {"run": cmd_run, "gamma": cmd_gamma, "partition": cmd_partition}[args.command](spec, out)
    except CONFIG_ERRORS as exc:
        print(f"fedsim: configuration error: {exc}", file=sys.stderr)
        return 1
    except FedSimError as exc:
        print(f"fedsim: runtime error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # never surface a traceback to the user
        print(f"fedsim: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
