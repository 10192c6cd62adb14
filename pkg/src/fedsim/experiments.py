"""Benchmark definitions shared by the experiment scripts and the acceptance suite.

The synthetic benchmark is 10 Gaussian blobs in 8 dimensions (5,000 train /
1,000 test) learned by an 8-64-10 MLP; the MNIST benchmark is a 784-200-10
MLP.  Both use the baseline federation: 100 clients, 10% participation,
B = 20, E = 1, eta = 0.05.
"""

from __future__ import annotations

import dataclasses
from typing import Optional

from fedsim import data, nn, seeding
from fedsim.engine import FederatedConfig
from fedsim.strategies import StrategyConfig

SYNTH_CLASSES = 10
SYNTH_PER_CLASS = 600
SYNTH_DIM = 8
SYNTH_SEED = 1
SYNTH_HIDDEN = (64,)
MNIST_HIDDEN = (200,)


def synthetic_benchmark() -> tuple[data.Dataset, data.Dataset]:
    full = data.synth_generate(SYNTH_CLASSES, SYNTH_PER_CLASS, SYNTH_DIM, SYNTH_SEED)
    return data.train_test_split(full, 1 / 6, SYNTH_SEED)


def mnist_benchmark(train_limit: Optional[int] = 10_000) -> tuple[data.Dataset, data.Dataset]:
    """First ``train_limit`` training digits and the full test file of whatever MNIST copy is found."""
    from fedsim import mnist

    train, test = mnist.load_mnist()
    if train_limit is not None and len(train) > train_limit:
        train = train.subset(range(train_limit))
    return train, test


def federated(kind: str = "fedavg", hidden=SYNTH_HIDDEN, **overrides) -> FederatedConfig:
    """Baseline FederatedConfig; strategy options go in as StrategyConfig field names."""
    strategy_fields = {f.name for f in dataclasses.fields(StrategyConfig)}
    strat = {k: overrides.pop(k) for k in list(overrides) if k in strategy_fields}
    return FederatedConfig(strategy=StrategyConfig(kind=kind, **strat), hidden=tuple(hidden), **overrides)


def pretrained_logreg(
    dataset: data.Dataset, epochs: int = 1, batch_size: int = 20, eta: float = 0.05, seed: int = 0
) -> nn.ModelParams:
    """Logistic-regression snapshot used by the gamma probe."""
    params = nn.init_model(nn.ModelArch.logreg(dataset.dim, dataset.class_count), seed)
    if epochs < 1:
        return params
    rng = seeding.stream(seed, seeding.WARMSTART)
    return nn.local_train(params, dataset.features, dataset.labels, epochs, batch_size, eta, rng)
