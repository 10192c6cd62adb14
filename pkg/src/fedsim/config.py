"""YAML experiment specs with a closed key set.

Omitted keys take the baseline setting (100 clients, 10% participation,
batch size 20).  Unknown keys, wrong types and out-of-range values raise
ConfigError naming the dotted key path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from fedsim.engine import FederatedConfig
from fedsim.errors import ConfigError
from fedsim.strategies import KINDS, StrategyConfig

# Per-strategy option names as written in config files -> StrategyConfig fields.
STRATEGY_OPTIONS = {
    "fedavg": {},
    "signsgd": {"downstream": "sign_downstream"},
    "stc": {"k_frac": "k_frac"},
    "cmfl": {"threshold": "cmfl_threshold"},
    "fedmmd": {"lambda": "mmd_lambda", "bandwidth": "mmd_bandwidth"},
    "feddropout": {"rate": "dropout_rate"},
    "datashare": {"gamma": "gamma", "alpha": "alpha", "warmstart_epochs": "warmstart_epochs"},
}

DATA_KEYS = {
    "source", "classes", "per_class", "dim", "test_fraction", "seed",
    "dir", "train_images", "train_labels", "test_images", "test_labels", "train_limit",
}
FEDERATED_KEYS = {
    "clients", "participation", "local_epochs", "batch_size", "eta", "rounds",
    "target_accuracy", "eval_every", "seed",
}
TOP_KEYS = {"name", "data", "federated", "model", "partition", "strategy", "gamma", "output"}


@dataclass
class DataSpec:
    source: str = "synthetic"
    classes: int = 10
    per_class: int = 600
    dim: int = 8
    test_fraction: float = 1 / 6
    seed: int = 1
    dir: Optional[str] = None
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    train_limit: Optional[int] = None


@dataclass
class GammaSpec:
    batch_sizes: list[int] = field(default_factory=lambda: [1, 4, 16, 64])
    trials: int = 500
    pretrain_epochs: int = 1
    subset: Optional[int] = 2000
    seed: int = 0


@dataclass
class ExperimentSpec:
    name: str
    federated: FederatedConfig
    data: DataSpec = field(default_factory=DataSpec)
    gamma: GammaSpec = field(default_factory=GammaSpec)
    output: Optional[str] = None
    base_dir: Path = field(default_factory=Path.cwd)


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _check_keys(block: Any, allowed: set, path: str) -> dict:
    if block is None:
        return {}
    if not isinstance(block, dict):
        raise ConfigError("expected a mapping", path or "<root>")
    for key in block:
        if key not in allowed:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", _join(path, str(key)))
    return block


def _typed(value, kind, path: str):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path)
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path)
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", path)
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path)
        return value
    raise AssertionError(kind)


def _get(block: dict, key: str, kind, default, path: str):
    if key not in block or block[key] is None:
        return default
    return _typed(block[key], kind, _join(path, key))


def _parse_strategy(block) -> StrategyConfig:
    block = block if block is not None else {}
    if not isinstance(block, dict):
        raise ConfigError("expected a mapping", "strategy")
    kind = _get(block, "kind", str, "fedavg", "strategy")
    if kind not in KINDS:
        raise ConfigError(f"unknown strategy {kind!r}; choose from {', '.join(KINDS)}", "strategy.kind")
    _check_keys(block, {"kind", kind}, "strategy")
    options = _check_keys(block.get(kind), set(STRATEGY_OPTIONS[kind]), f"strategy.{kind}")
    kwargs: dict[str, Any] = {"kind": kind}
    for key, value in options.items():
        path = f"strategy.{kind}.{key}"
        target = STRATEGY_OPTIONS[kind][key]
        if target == "mmd_bandwidth":
            kwargs[target] = value if value == "median" else _typed(value, float, path)
        elif target == "sign_downstream":
            kwargs[target] = _typed(value, bool, path)
        elif target == "warmstart_epochs":
            kwargs[target] = _typed(value, int, path)
        else:
            kwargs[target] = _typed(value, float, path)
    return StrategyConfig(**kwargs)


def parse_spec(doc: Any, base_dir: Path | None = None, default_name: str = "experiment") -> ExperimentSpec:
    doc = _check_keys(doc, TOP_KEYS, "")
    name = _get(doc, "name", str, default_name, "")
    if not name:
        raise ConfigError("must be non-empty", "name")

    d = _check_keys(doc.get("data"), DATA_KEYS, "data")
    data = DataSpec(
        source=_get(d, "source", str, "synthetic", "data"),
        classes=_get(d, "classes", int, 10, "data"),
        per_class=_get(d, "per_class", int, 600, "data"),
        dim=_get(d, "dim", int, 8, "data"),
        test_fraction=_get(d, "test_fraction", float, 1 / 6, "data"),
        seed=_get(d, "seed", int, 1, "data"),
        dir=_get(d, "dir", str, None, "data"),
        train_images=_get(d, "train_images", str, None, "data"),
        train_labels=_get(d, "train_labels", str, None, "data"),
        test_images=_get(d, "test_images", str, None, "data"),
        test_labels=_get(d, "test_labels", str, None, "data"),
        train_limit=_get(d, "train_limit", int, None, "data"),
    )
    if data.source not in ("synthetic", "idx", "mnist"):
        raise ConfigError("must be synthetic, idx or mnist", "data.source")
    if data.source == "idx" and not all(
        (data.train_images, data.train_labels, data.test_images, data.test_labels)
    ):
        raise ConfigError("idx source needs train_images, train_labels, test_images, test_labels", "data")
    if not 0.0 < data.test_fraction < 1.0:
        raise ConfigError("must lie in (0, 1)", "data.test_fraction")

    f = _check_keys(doc.get("federated"), FEDERATED_KEYS, "federated")
    m = _check_keys(doc.get("model"), {"kind", "hidden"}, "model")
    p = _check_keys(doc.get("partition"), {"mode", "shards_per_client"}, "partition")
    hidden = m.get("hidden", [200])
    if not isinstance(hidden, list) or not all(isinstance(h, int) and not isinstance(h, bool) for h in hidden):
        raise ConfigError("expected a list of integers", "model.hidden")
    target = f.get("target_accuracy")
    fed = FederatedConfig(
        n_clients=_get(f, "clients", int, 100, "federated"),
        participation=_get(f, "participation", float, 0.10, "federated"),
        local_epochs=_get(f, "local_epochs", int, 1, "federated"),
        batch_size=_get(f, "batch_size", int, 20, "federated"),
        eta=_get(f, "eta", float, 0.05, "federated"),
        rounds_max=_get(f, "rounds", int, 100, "federated"),
        target_accuracy=None if target is None else _typed(target, float, "federated.target_accuracy"),
        eval_every=_get(f, "eval_every", int, 1, "federated"),
        seed=_get(f, "seed", int, 0, "federated"),
        strategy=_parse_strategy(doc.get("strategy")),
        partition=_get(p, "mode", str, "iid", "partition"),
        shards_per_client=_get(p, "shards_per_client", int, 2, "partition"),
        model=_get(m, "kind", str, "mlp", "model"),
        hidden=tuple(hidden),
    )

    g = _check_keys(doc.get("gamma"), {"batch_sizes", "trials", "pretrain_epochs", "subset", "seed"}, "gamma")
    sizes = g.get("batch_sizes", [1, 4, 16, 64])
    if not isinstance(sizes, list) or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 1 for s in sizes):
        raise ConfigError("expected a list of positive integers", "gamma.batch_sizes")
    gamma = GammaSpec(
        batch_sizes=sizes,
        trials=_get(g, "trials", int, 500, "gamma"),
        pretrain_epochs=_get(g, "pretrain_epochs", int, 1, "gamma"),
        subset=_get(g, "subset", int, 2000, "gamma"),
        seed=_get(g, "seed", int, 0, "gamma"),
    )
    if gamma.trials < 1:
        raise ConfigError("must be >= 1", "gamma.trials")

    return ExperimentSpec(
        name=name,
        federated=fed,
        data=data,
        gamma=gamma,
        output=_get(doc, "output", str, None, ""),
        base_dir=base_dir or Path.cwd(),
    )


def parse_config(path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}", str(path)) from exc
    return parse_spec(doc if doc is not None else {}, path.parent, default_name=path.stem)
