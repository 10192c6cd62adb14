"""Datasets, client partitions and the shared data pool."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fedsim import seeding
from fedsim.errors import ConfigError, ConsistencyError, FormatError, PartitionError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

MODES = ("iid", "sorted-noniid", "shared-pool-remainder")


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ConsistencyError(
                f"features {self.features.shape} do not match labels {self.labels.shape}"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ConsistencyError("labels must lie in [0, class_count)")
        if not np.all(np.isfinite(self.features)):
            raise ConsistencyError("features must be finite")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[indices], self.labels[indices], self.class_count)

    def label_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)


@dataclass
class PartitionPlan:
    assignments: list[np.ndarray]
    mode: str
    seed: int
    params: dict = field(default_factory=dict)

    @property
    def n_clients(self) -> int:
        return len(self.assignments)

    def sizes(self) -> list[int]:
        return [len(a) for a in self.assignments]

    def to_json(self) -> str:
        doc = {
            "mode": self.mode,
            "seed": self.seed,
            "params": self.params,
            "clients": {str(i): a.tolist() for i, a in enumerate(self.assignments)},
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PartitionPlan":
        doc = json.loads(text)
        if doc.get("mode") not in MODES:
            raise FormatError(f"unknown partition mode {doc.get('mode')!r}")
        clients = doc["clients"]
        assignments = [np.asarray(clients[str(i)], dtype=np.int64) for i in range(len(clients))]
        return cls(assignments, doc["mode"], int(doc["seed"]), doc.get("params", {}))


def _read_idx(path: Path, expected_magic: int) -> tuple[tuple[int, ...], bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: magic {magic:#010x}, expected {expected_magic:#010x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    body = raw[header:]
    if len(body) != int(np.prod(dims)):
        raise FormatError(f"{path}: body has {len(body)} bytes, header promises {int(np.prod(dims))}")
    return dims, body


def load_idx(images_path, labels_path, class_count: int = 10) -> Dataset:
    """Parse an MNIST-style pair of IDX files (unsigned byte payloads)."""
    img_dims, img_body = _read_idx(images_path, IDX_IMAGES_MAGIC)
    lbl_dims, lbl_body = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if img_dims[0] != lbl_dims[0]:
        raise ConsistencyError(f"{img_dims[0]} images but {lbl_dims[0]} labels")
    n = img_dims[0]
    d = int(np.prod(img_dims[1:]))
    pixels = np.frombuffer(img_body, dtype=np.uint8).reshape(n, d)
    labels = np.frombuffer(lbl_body, dtype=np.uint8).astype(np.int64)
    return Dataset(pixels / 255.0, labels, class_count)


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Inverse of load_idx for uint8 images shaped (n, rows, cols)."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">I", IDX_IMAGES_MAGIC))
        f.write(struct.pack(f">{images.ndim}I", *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        f.write(labels.tobytes())


def synth_generate(classes: int, per_class: int, dim: int, seed: int, std: float = 0.15) -> Dataset:
    """Gaussian blobs in [0, 1]^dim, one random mean per class, labels in class order."""
    if classes < 2 or per_class < 1 or dim < 1:
        raise ConfigError("synthetic data needs classes >= 2, per_class >= 1, dim >= 1")
    rng = seeding.stream(seed, seeding.SYNTH)
    means = rng.uniform(0.0, 1.0, size=(classes, dim))
    noise = rng.normal(0.0, std, size=(classes * per_class, dim))
    labels = np.repeat(np.arange(classes), per_class)
    X = np.clip(means[labels] + noise, 0.0, 1.0)
    return Dataset(X, labels, classes)


def partition_iid(dataset: Dataset, n_clients: int, seed: int) -> PartitionPlan:
    n = len(dataset)
    if n_clients < 1 or n < n_clients:
        raise PartitionError(f"cannot split {n} samples over {n_clients} clients")
    perm = seeding.stream(seed, seeding.PARTITION).permutation(n)
    # array_split gives the first n % n_clients chunks one extra sample.
    return PartitionPlan(list(np.array_split(perm, n_clients)), "iid", seed)


def _shard_label_counts(labels: np.ndarray, shards: list[np.ndarray]) -> list[int]:
    return [len(np.unique(labels[s])) for s in shards]


def partition_noniid_sorted(
    dataset: Dataset, n_clients: int, shards_per_client: int, seed: int
) -> PartitionPlan:
    """Sort by label, cut into n_clients * shards_per_client contiguous shards, deal them out.

    Shards that straddle a label boundary are dealt to distinct clients first
    (while enough clients exist), so no client collects two of them.
    """
    n = len(dataset)
    if n_clients < 1 or shards_per_client < 1:
        raise PartitionError("n_clients and shards_per_client must be >= 1")
    n_shards = n_clients * shards_per_client
    if n < n_shards:
        raise PartitionError(f"{n} samples cannot fill {n_shards} non-empty shards")
    order = np.argsort(dataset.labels, kind="stable")
    shards = np.array_split(order, n_shards)
    counts = _shard_label_counts(dataset.labels, shards)
    mixed = np.array([i for i, c in enumerate(counts) if c > 1], dtype=np.int64)
    pure = np.setdiff1d(np.arange(n_shards), mixed)

    rng = seeding.stream(seed, seeding.PARTITION)
    mixed = rng.permutation(mixed)
    pure = rng.permutation(pure)
    client_order = rng.permutation(n_clients)

    owned: list[list[int]] = [[] for _ in range(n_clients)]
    # Round-robin over a shuffled client order: clients receive at most one
    # mixed shard until every client has one.
    deal = np.concatenate([mixed, pure])
    for j, shard in enumerate(deal):
        owned[client_order[j % n_clients]].append(int(shard))
    assignments = [np.sort(np.concatenate([shards[s] for s in own])) for own in owned]
    return PartitionPlan(
        assignments, "sorted-noniid", seed, {"shards_per_client": shards_per_client}
    )


@dataclass(frozen=True)
class SharedPoolConfig:
    gamma: float
    alpha: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}", "gamma")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}", "alpha")


def shared_pool_indices(dataset: Dataset, gamma: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified pool/remainder index split with round(gamma * n) pool samples."""
    n = len(dataset)
    target = int(np.floor(gamma * n + 0.5))
    if gamma * n < dataset.class_count:
        raise ConfigError(
            f"pool of {gamma * n:g} samples cannot cover {dataset.class_count} classes", "gamma"
        )
    counts = dataset.label_histogram()
    exact = gamma * counts
    take = np.floor(exact).astype(np.int64)
    # Largest remainder keeps every class within one sample of proportional.
    short = target - take.sum()
    if short > 0:
        frac = exact - take
        order = np.lexsort((np.arange(len(counts)), -frac))
        for c in order[:short]:
            take[c] += 1
    rng = seeding.stream(seed, seeding.POOL)
    pool = []
    for c in range(dataset.class_count):
        members = np.flatnonzero(dataset.labels == c)
        pool.append(rng.choice(members, size=min(take[c], len(members)), replace=False))
    pool_idx = np.sort(np.concatenate(pool)) if pool else np.empty(0, np.int64)
    rest_idx = np.setdiff1d(np.arange(n), pool_idx)
    return pool_idx, rest_idx


def extract_shared_pool(dataset: Dataset, cfg: SharedPoolConfig, seed: int) -> tuple[Dataset, Dataset]:
    pool_idx, rest_idx = shared_pool_indices(dataset, cfg.gamma, seed)
    return dataset.subset(pool_idx), dataset.subset(rest_idx)


def label_histograms(dataset: Dataset, plan: PartitionPlan) -> np.ndarray:
    """(n_clients, class_count) label counts."""
    return np.stack(
        [np.bincount(dataset.labels[a], minlength=dataset.class_count) for a in plan.assignments]
    )


def train_test_split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified holdout split for synthetic data."""
    test_idx, train_idx = shared_pool_indices(dataset, test_fraction, seed ^ 0x5EED)
    return dataset.subset(train_idx), dataset.subset(test_idx)
