"""Federated algorithms behind one broadcast / client_update / aggregate contract.

FedAvg-style clients upload parameters; the compressed strategies (STC, CMFL)
upload deltas against the broadcast model.  Both aggregate with the
sample-count weights m_k / m, reduced in ascending client-id order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from fedsim import compression as C
from fedsim import nn, seeding
from fedsim.errors import AggregationError, ConfigError, EmptyClientData, RoundError, ShapeError
from fedsim.mmd import mmd2_and_grad
from fedsim.records import RoundRecord

KINDS = ("fedavg", "signsgd", "stc", "cmfl", "fedmmd", "feddropout", "datashare")


@dataclass
class StrategyConfig:
    kind: str = "fedavg"
    k_frac: float = 0.01
    cmfl_threshold: float = 0.8
    mmd_lambda: float = 0.1
    mmd_bandwidth: Union[str, float] = "median"
    dropout_rate: float = 0.25
    warmstart_epochs: int = 1
    gamma: float = 0.1
    alpha: float = 1.0
    sign_downstream: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown strategy {self.kind!r}; choose from {KINDS}", "strategy.kind")
        if not 0.0 < self.k_frac <= 1.0:
            raise ConfigError("must lie in (0, 1]", "strategy.k_frac")
        if not 0.0 <= self.cmfl_threshold <= 1.0:
            raise ConfigError("must lie in [0, 1]", "strategy.cmfl_threshold")
        if self.mmd_lambda < 0:
            raise ConfigError("must be >= 0", "strategy.mmd_lambda")
        if self.mmd_bandwidth != "median" and not float(self.mmd_bandwidth) > 0:
            raise ConfigError("must be 'median' or a positive number", "strategy.mmd_bandwidth")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("must lie in [0, 1)", "strategy.dropout_rate")
        if self.warmstart_epochs < 0:
            raise ConfigError("must be >= 0", "strategy.warmstart_epochs")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("must lie in [0, 1)", "strategy.gamma")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("must lie in [0, 1]", "strategy.alpha")


@dataclass
class TrainSettings:
    epochs: int = 1
    batch_size: int = 20
    eta: float = 0.05
    seed: int = 0


@dataclass
class ClientState:
    id: int
    sample_indices: np.ndarray
    residual: Optional[np.ndarray] = None
    last_global_delta: Optional[np.ndarray] = None

    @property
    def m_k(self) -> int:
        return len(self.sample_indices)


@dataclass
class RoundContext:
    """What a round needs besides the model: the training pool and settings."""

    round_index: int
    X: np.ndarray
    y: np.ndarray
    train: TrainSettings = field(default_factory=TrainSettings)

    def client_data(self, client: ClientState) -> tuple[np.ndarray, np.ndarray]:
        return self.X[client.sample_indices], self.y[client.sample_indices]

    def client_rng(self, client: ClientState) -> np.random.Generator:
        return seeding.stream(self.train.seed, seeding.CLIENT, self.round_index, client.id)


def weighted_average(updates: list, weights: list) -> np.ndarray:
    """sum_k (m_k / m) u_k, accumulated in the given order.

    Evaluated as u_0 + sum_k (m_k / m)(u_k - u_0), which equals the plain
    weighted sum algebraically and returns identical inputs bit-for-bit.
    """
    if not updates:
        raise AggregationError("nothing to aggregate")
    if len(updates) != len(weights):
        raise AggregationError("one weight per update required")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w <= 0):
        raise AggregationError("weights must be positive")
    anchor = np.asarray(updates[0], dtype=np.float64)
    total = float(w.sum())
    out = anchor.copy()
    for u, wk in zip(updates[1:], w[1:]):
        u = np.asarray(u, dtype=np.float64)
        if u.shape != anchor.shape:
            raise ShapeError("updates differ in length")
        out += (wk / total) * (u - anchor)
    return out


def cmfl_relevance(local_delta, global_delta) -> float:
    """Fraction of coordinates whose signs agree (zero counts as positive)."""
    a = np.asarray(local_delta)
    b = np.asarray(global_delta)
    if a.shape != b.shape:
        raise ShapeError("local and global deltas differ in length")
    if a.size == 0:
        return 1.0
    return float(np.mean(C.sign_of(a) == C.sign_of(b)))


class Strategy:
    """Base strategy: dense broadcast, local SGD, parameter upload, FedAvg aggregation."""

    kind = "fedavg"

    def __init__(self, cfg: StrategyConfig):
        self.cfg = cfg

    def broadcast(self, global_params: nn.ModelParams, ctx: RoundContext) -> C.Update:
        return C.dense(global_params.values)

    def local_model(self, payload: C.Update, global_params: nn.ModelParams) -> nn.ModelParams:
        return nn.ModelParams(global_params.arch, C.decode(payload))

    def train_client(self, start: nn.ModelParams, client: ClientState, ctx: RoundContext) -> nn.ModelParams:
        X, y = ctx.client_data(client)
        t = ctx.train
        return nn.local_train(start, X, y, t.epochs, t.batch_size, t.eta, ctx.client_rng(client))

    def client_update(
        self, payload: C.Update, client: ClientState, ctx: RoundContext, global_params: nn.ModelParams
    ) -> Optional[C.Update]:
        trained = self.train_client(self.local_model(payload, global_params), client, ctx)
        return C.dense(trained.values)

    def aggregate(
        self, global_params: nn.ModelParams, uploads: list[tuple[ClientState, C.Update]], ctx: RoundContext
    ) -> nn.ModelParams:
        values = weighted_average([C.decode(u) for _, u in uploads], [c.m_k for c, _ in uploads])
        return nn.ModelParams(global_params.arch, values)

    def round(
        self, global_params: nn.ModelParams, clients: list[ClientState], ctx: RoundContext
    ) -> tuple[nn.ModelParams, RoundRecord]:
        return run_round(self, global_params, clients, ctx)


def run_round(
    strategy: Strategy, global_params: nn.ModelParams, clients: list[ClientState], ctx: RoundContext
) -> tuple[nn.ModelParams, RoundRecord]:
    """One broadcast -> local update -> aggregate cycle with its bit ledger."""
    if not clients:
        raise RoundError("no clients sampled", ctx.round_index)
    clients = sorted(clients, key=lambda c: c.id)
    record = RoundRecord(round=ctx.round_index, participants=[c.id for c in clients])
    payload = strategy.broadcast(global_params, ctx)
    uploads = []
    trained_any = False
    for client in clients:
        record.bits_down += payload.bits
        try:
            up = strategy.client_update(payload, client, ctx, global_params)
        except EmptyClientData:
            continue
        trained_any = True
        if up is None:
            record.uploads_skipped += 1
            continue
        record.bits_up += up.bits
        uploads.append((client, up))
    if not trained_any:
        raise RoundError("every sampled client was skipped", ctx.round_index)
    if not uploads:
        record.stalled = True
        return global_params, record
    return strategy.aggregate(global_params, uploads, ctx), record


class FedAvg(Strategy):
    kind = "fedavg"


class DataShare(FedAvg):
    """FedAvg rounds after a server warm-start on the shared pool (see datashare_warmstart)."""

    kind = "datashare"


class SignSGD(Strategy):
    kind = "signsgd"

    def __init__(self, cfg: StrategyConfig):
        super().__init__(cfg)
        self._last_vote: Optional[np.ndarray] = None

    def broadcast(self, global_params, ctx):
        # With downstream compression the clients replay the voted step themselves.
        if self.cfg.sign_downstream and self._last_vote is not None:
            return C.sign_compress(self._last_vote)
        return C.dense(global_params.values)

    def client_update(self, payload, client, ctx, global_params):
        X, y = ctx.client_data(client)
        if len(y) == 0:
            raise EmptyClientData("client has no samples")
        rng = ctx.client_rng(client)
        take = rng.choice(len(y), size=min(ctx.train.batch_size, len(y)), replace=False)
        g = nn.gradient(global_params, nn.Batch(X[take], y[take]))
        return C.sign_compress(g)

    def aggregate(self, global_params, uploads, ctx):
        vote = C.majority_aggregate([u for _, u in uploads])
        self._last_vote = vote
        return nn.ModelParams(global_params.arch, global_params.values - ctx.train.eta * vote)


class STC(Strategy):
    """Sparse ternary deltas upstream and downstream, each with error feedback."""

    kind = "stc"

    def __init__(self, cfg: StrategyConfig):
        super().__init__(cfg)
        self.server_residual: Optional[np.ndarray] = None
        self._pending: Optional[C.Update] = None

    def broadcast(self, global_params, ctx):
        # The first round ships the full model; later rounds ship the compressed server delta.
        return self._pending if self._pending is not None else C.dense(global_params.values)

    def local_model(self, payload, global_params):
        return global_params.copy()

    def client_update(self, payload, client, ctx, global_params):
        trained = self.train_client(self.local_model(payload, global_params), client, ctx)
        delta = trained.values - global_params.values
        if client.residual is None:
            client.residual = np.zeros_like(delta)
        up, client.residual = C.stc_encode(delta, self.cfg.k_frac, client.residual)
        return up

    def aggregate(self, global_params, uploads, ctx):
        avg = weighted_average([C.decode(u) for _, u in uploads], [c.m_k for c, _ in uploads])
        if self.server_residual is None:
            self.server_residual = np.zeros_like(avg)
        down, self.server_residual = C.stc_encode(avg, self.cfg.k_frac, self.server_residual)
        self._pending = down
        return nn.ModelParams(global_params.arch, global_params.values + C.decode(down))


class CMFL(Strategy):
    """Dense deltas, uploaded only when their signs agree enough with the last global delta."""

    kind = "cmfl"

    def __init__(self, cfg: StrategyConfig):
        super().__init__(cfg)
        self.last_global_delta: Optional[np.ndarray] = None

    def client_update(self, payload, client, ctx, global_params):
        trained = self.train_client(self.local_model(payload, global_params), client, ctx)
        delta = trained.values - global_params.values
        client.last_global_delta = self.last_global_delta
        if self.last_global_delta is not None:
            if cmfl_relevance(delta, self.last_global_delta) < self.cfg.cmfl_threshold:
                return None
        return C.dense(delta)

    def aggregate(self, global_params, uploads, ctx):
        step = weighted_average([C.decode(u) for _, u in uploads], [c.m_k for c, _ in uploads])
        self.last_global_delta = step
        return nn.ModelParams(global_params.arch, global_params.values + step)


class FedMMD(Strategy):
    """FedAvg whose local loss adds lam * MMD^2 between local and broadcast-model features."""

    kind = "fedmmd"

    def train_client(self, start, client, ctx):
        X, y = ctx.client_data(client)
        t = ctx.train
        reference = start.copy()
        lam, bw = self.cfg.mmd_lambda, self.cfg.mmd_bandwidth

        def penalty_for(xb):
            target = nn.features(reference, xb)

            def penalty(feats):
                value, grad = mmd2_and_grad(feats, target, bw)
                return lam * value, lam * grad

            return penalty

        return nn.local_train(
            start, X, y, t.epochs, t.batch_size, t.eta, ctx.client_rng(client),
            penalty_for if lam > 0 else None,
        )


class FedDropout(Strategy):
    """Broadcast and train a masked sub-model; one mask set per round."""

    kind = "feddropout"

    def __init__(self, cfg: StrategyConfig):
        super().__init__(cfg)
        self.masks: Optional[C.MaskSet] = None

    def broadcast(self, global_params, ctx):
        self.masks = C.make_masks(global_params.arch, self.cfg.dropout_rate, ctx.train.seed, ctx.round_index)
        return C.extract_submodel(global_params, self.masks)

    def local_model(self, payload, global_params):
        return nn.ModelParams(self.masks.sub_arch, payload.values)

    def client_update(self, payload, client, ctx, global_params):
        trained = self.train_client(self.local_model(payload, global_params), client, ctx)
        return C.Update("submodel", payload.dim, trained.values, payload.indices)

    def aggregate(self, global_params, uploads, ctx):
        avg = weighted_average([u.values for _, u in uploads], [c.m_k for c, _ in uploads])
        sub = C.Update("submodel", global_params.arch.n_params, avg, uploads[0][1].indices)
        return C.expand_submodel(sub, self.masks, global_params)


_REGISTRY = {
    cls.kind: cls for cls in (FedAvg, SignSGD, STC, CMFL, FedMMD, FedDropout, DataShare)
}


def make_strategy(cfg: StrategyConfig) -> Strategy:
    return _REGISTRY[cfg.kind](cfg)


def datashare_warmstart(
    global_params: nn.ModelParams,
    pool_X: np.ndarray,
    pool_y: np.ndarray,
    epochs: int,
    train: TrainSettings,
) -> nn.ModelParams:
    """Train the initial global model on the shared pool before round 1."""
    if len(pool_y) == 0:
        raise ConfigError("shared pool is empty", "strategy.gamma")
    if epochs < 1:
        return global_params
    rng = seeding.stream(train.seed, seeding.WARMSTART)
    return nn.local_train(global_params, pool_X, pool_y, epochs, train.batch_size, train.eta, rng)


def augment_with_pool(
    clients: list[ClientState], pool_indices: np.ndarray, alpha: float, seed: int
) -> list[ClientState]:
    """Copy a random alpha fraction of the pool into every client's index list."""
    n_share = int(np.floor(alpha * len(pool_indices) + 0.5))
    if n_share == 0:
        return clients
    out = []
    for c in clients:
        rng = seeding.stream(seed, seeding.POOL, 1, c.id)
        share = pool_indices if n_share >= len(pool_indices) else rng.choice(pool_indices, n_share, replace=False)
        out.append(ClientState(c.id, np.concatenate([c.sample_indices, np.sort(share)])))
    return out
