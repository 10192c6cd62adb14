"""Round loop: sample clients, broadcast, train locally, aggregate, evaluate."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from fedsim import data, nn, seeding
from fedsim.errors import ConfigError, FedSimError, RoundError
from fedsim.records import RoundRecord, RunResult
from fedsim.strategies import (
    ClientState,
    RoundContext,
    StrategyConfig,
    TrainSettings,
    augment_with_pool,
    datashare_warmstart,
    make_strategy,
    run_round,
)

log = logging.getLogger(__name__)

PARTITION_MODES = ("iid", "sorted")


@dataclass
class FederatedConfig:
    """Hyperparameters of one federated run; defaults are the baseline setting."""

    n_clients: int = 100
    participation: float = 0.10
    local_epochs: int = 1
    batch_size: int = 20
    eta: float = 0.05
    rounds_max: int = 100
    target_accuracy: Optional[float] = None
    seed: int = 0
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    partition: str = "iid"
    shards_per_client: int = 2
    eval_every: int = 1
    model: str = "mlp"
    hidden: tuple[int, ...] = (200,)

    def __post_init__(self):
        if self.n_clients < 1:
            raise ConfigError("must be >= 1", "federated.clients")
        if not 0.0 < self.participation <= 1.0:
            raise ConfigError("must lie in (0, 1]", "federated.participation")
        if self.local_epochs < 1:
            raise ConfigError("must be >= 1", "federated.local_epochs")
        if self.batch_size < 1:
            raise ConfigError("must be >= 1", "federated.batch_size")
        if not self.eta > 0:
            raise ConfigError("must be > 0", "federated.eta")
        if self.rounds_max < 0:
            raise ConfigError("must be >= 0", "federated.rounds")
        if self.eval_every < 1:
            raise ConfigError("must be >= 1", "federated.eval_every")
        if self.partition not in PARTITION_MODES:
            raise ConfigError(f"must be one of {PARTITION_MODES}", "partition.mode")
        if self.shards_per_client < 1:
            raise ConfigError("must be >= 1", "partition.shards_per_client")
        if self.model not in ("logreg", "mlp"):
            raise ConfigError("must be 'logreg' or 'mlp'", "model.kind")
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.model == "mlp" and (not self.hidden or min(self.hidden) < 1):
            raise ConfigError("an MLP needs positive hidden sizes", "model.hidden")

    def arch(self, n_features: int, n_classes: int) -> nn.ModelArch:
        if self.model == "logreg":
            return nn.ModelArch.logreg(n_features, n_classes)
        return nn.ModelArch.mlp(n_features, self.hidden, n_classes)

    @property
    def participants_per_round(self) -> int:
        return participants_per_round(self.n_clients, self.participation)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def participants_per_round(n_clients: int, participation: float) -> int:
    return max(1, min(n_clients, int(math.floor(participation * n_clients + 0.5))))


def sample_clients(n_clients: int, participation: float, seed: int, round_index: int) -> np.ndarray:
    """m distinct ids, uniform without replacement within the round, sorted."""
    m = participants_per_round(n_clients, participation)
    rng = seeding.stream(seed, seeding.SAMPLING, round_index)
    return np.sort(rng.choice(n_clients, size=m, replace=False))


def detect_convergence(records: list[RoundRecord], target_accuracy: Optional[float]) -> Optional[int]:
    if target_accuracy is None:
        return None
    for r in records:
        if r.test_accuracy is not None and r.test_accuracy >= target_accuracy:
            return r.round
    return None


def build_partition(cfg: FederatedConfig, dataset: data.Dataset) -> data.PartitionPlan:
    if cfg.partition == "iid":
        return data.partition_iid(dataset, cfg.n_clients, cfg.seed)
    return data.partition_noniid_sorted(dataset, cfg.n_clients, cfg.shards_per_client, cfg.seed)


def build_clients(cfg: FederatedConfig, train: data.Dataset) -> tuple[list[ClientState], Optional[np.ndarray]]:
    """Client states over ``train``; for datashare also returns the pool indices."""
    pool_idx = None
    domain = np.arange(len(train))
    if cfg.strategy.kind == "datashare" and cfg.strategy.gamma > 0:
        pool_idx, domain = data.shared_pool_indices(train, cfg.strategy.gamma, cfg.seed)
    plan = build_partition(cfg, train.subset(domain))
    clients = [ClientState(i, domain[a]) for i, a in enumerate(plan.assignments)]
    if pool_idx is not None:
        clients = augment_with_pool(clients, pool_idx, cfg.strategy.alpha, cfg.seed)
    return clients, pool_idx


def run_federated(cfg: FederatedConfig, train: data.Dataset, test: data.Dataset) -> RunResult:
    started = time.perf_counter()
    arch = cfg.arch(train.dim, train.class_count)
    settings = TrainSettings(cfg.local_epochs, cfg.batch_size, cfg.eta, cfg.seed)
    clients, pool_idx = build_clients(cfg, train)
    global_params = nn.init_model(arch, cfg.seed)
    if pool_idx is not None:
        global_params = datashare_warmstart(
            global_params, train.features[pool_idx], train.labels[pool_idx],
            cfg.strategy.warmstart_epochs, settings,
        )
    strategy = make_strategy(cfg.strategy)

    result = RunResult(config=cfg.to_dict())
    acc, loss = nn.evaluate(global_params, test.features, test.labels)
    result.records.append(RoundRecord(0, [], acc, loss))

    for r in range(1, cfg.rounds_max + 1):
        ids = sample_clients(cfg.n_clients, cfg.participation, cfg.seed, r)
        ctx = RoundContext(r, train.features, train.labels, settings)
        try:
            global_params, record = run_round(strategy, global_params, [clients[i] for i in ids], ctx)
        except RoundError:
            raise
        except FedSimError as exc:
            raise RoundError(str(exc), r) from exc
        if r % cfg.eval_every == 0 or r == cfg.rounds_max:
            record.test_accuracy, record.test_loss = nn.evaluate(global_params, test.features, test.labels)
        result.records.append(record)
        if cfg.target_accuracy is not None and record.test_accuracy is not None:
            if record.test_accuracy >= cfg.target_accuracy:
                break

    result.converged_at = detect_convergence(result.records, cfg.target_accuracy)
    result.wall_time = time.perf_counter() - started
    log.info(
        "%s: %d rounds, final accuracy %s, %.1fs",
        cfg.strategy.kind, len(result.records) - 1, result.final_accuracy, result.wall_time,
    )
    return result
