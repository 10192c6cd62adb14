import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedsim import data, nn, seeding
from fedsim.errors import ConfigError, ConsistencyError, FormatError, PartitionError


def balanced(classes, per_class, dim=2, seed=0):
    return data.synth_generate(classes, per_class, dim, seed)


def assert_exact_partition(plan, n):
    allidx = np.concatenate(plan.assignments)
    assert len(allidx) == len(np.unique(allidx)), "assignments overlap"
    assert set(allidx.tolist()) <= set(range(n))
    assert all(len(a) > 0 for a in plan.assignments)


# ---------------------------------------------------------------- IDX files


def test_idx_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, size=(7, 3, 4), dtype=np.uint8)
    imgs[0, 0, 0], imgs[0, 0, 1] = 255, 0
    labels = rng.integers(0, 10, size=7)
    data.write_idx(tmp_path / "i", tmp_path / "l", imgs, labels)
    assert (tmp_path / "i").read_bytes()[:4] == bytes([0, 0, 8, 3])
    ds = data.load_idx(tmp_path / "i", tmp_path / "l")
    assert ds.features.shape == (7, 12)
    assert ds.features[0, 0] == 1.0 and ds.features[0, 1] == 0.0
    np.testing.assert_array_equal(ds.features * 255, imgs.reshape(7, 12))
    np.testing.assert_array_equal(ds.labels, labels)


def test_idx_header_arithmetic(tmp_path):
    # header only, so we just check the parsed dimensions without a 7.8 MB body
    imgs = np.zeros((10, 28, 28), dtype=np.uint8)
    data.write_idx(tmp_path / "i", tmp_path / "l", imgs, np.zeros(10))
    ds = data.load_idx(tmp_path / "i", tmp_path / "l")
    assert (len(ds), ds.dim) == (10, 784)
    dims, _ = data._read_idx(tmp_path / "i", data.IDX_IMAGES_MAGIC)
    assert dims == (10, 28, 28)


def test_idx_wrong_magic(tmp_path):
    (tmp_path / "i").write_bytes(struct.pack(">IIII", 0x802, 1, 1, 1) + b"\x00")
    data.write_idx(tmp_path / "x", tmp_path / "l", np.zeros((1, 1, 1)), [0])
    with pytest.raises(FormatError):
        data.load_idx(tmp_path / "i", tmp_path / "l")


def test_idx_truncated_body(tmp_path):
    data.write_idx(tmp_path / "i", tmp_path / "l", np.zeros((3, 2, 2)), [0, 1, 2])
    raw = (tmp_path / "i").read_bytes()
    (tmp_path / "i").write_bytes(raw[:-1])
    with pytest.raises(FormatError):
        data.load_idx(tmp_path / "i", tmp_path / "l")


def test_idx_count_mismatch(tmp_path):
    data.write_idx(tmp_path / "i", tmp_path / "l", np.zeros((3, 2, 2)), [0, 1])
    with pytest.raises(ConsistencyError):
        data.load_idx(tmp_path / "i", tmp_path / "l")


# ---------------------------------------------------------------- datasets


def test_dataset_invariants():
    with pytest.raises(ConsistencyError):
        data.Dataset(np.zeros((2, 2)), [0, 3], 3)
    with pytest.raises(ConsistencyError):
        data.Dataset(np.array([[np.nan, 0.0]]), [0], 2)
    with pytest.raises(ConsistencyError):
        data.Dataset(np.zeros((2, 2)), [0], 2)


def test_synth_balanced_and_deterministic():
    a = balanced(10, 60)
    assert len(a) == 600
    assert a.label_histogram().tolist() == [60] * 10
    assert a.features.min() >= 0.0 and a.features.max() <= 1.0
    b = balanced(10, 60)
    assert a.features.tobytes() == b.features.tobytes()
    with pytest.raises(ConfigError):
        data.synth_generate(1, 10, 2, 0)


def test_synth_is_learnable(blobs):
    # oracle: the plain trainer should separate well-spaced blobs
    full = data.synth_generate(10, 100, 8, seed=3)
    rng = seeding.stream(3, seeding.SYNTH)
    means = rng.uniform(0.0, 1.0, size=(10, 8))
    gaps = np.linalg.norm(means[:, None] - means[None], axis=2)[np.triu_indices(10, 1)]
    assert gaps.min() >= 0.5
    train, test = data.train_test_split(full, 0.2, seed=0)
    params = nn.init_model(nn.ModelArch.logreg(8, 10), 0)
    params = nn.local_train(params, train.features, train.labels, 20, 10, 0.5, seeding.stream(0, 0))
    assert nn.evaluate(params, test.features, test.labels)[0] >= 0.95


# ---------------------------------------------------------------- partitions


def test_iid_sizes():
    ds = data.Dataset(np.zeros((10, 1)), np.zeros(10, int), 2)
    plan = data.partition_iid(ds, 3, 0)
    assert plan.sizes() == [4, 3, 3]
    assert_exact_partition(plan, 10)
    assert sorted(np.concatenate(plan.assignments).tolist()) == list(range(10))


def test_iid_60000_over_100():
    ds = data.Dataset(np.zeros((60000, 1)), np.arange(60000) % 10, 10)
    plan = data.partition_iid(ds, 100, 7)
    assert set(plan.sizes()) == {600}


def test_iid_too_few_samples():
    with pytest.raises(PartitionError):
        data.partition_iid(balanced(2, 1), 3, 0)


@pytest.mark.parametrize("spc", [1, 2])
def test_sorted_noniid_label_counts_60000(spc):
    ds = data.Dataset(np.zeros((60000, 1)), np.repeat(np.arange(10), 6000), 10)
    plan = data.partition_noniid_sorted(ds, 100, spc, 0)
    hist = data.label_histograms(ds, plan)
    distinct = (hist > 0).sum(axis=1)
    # shard size (300 or 600) divides the class size, so no shard straddles a boundary
    assert distinct.max() <= spc
    assert set(plan.sizes()) == {60000 // 100}


def test_sorted_noniid_boundary_shards():
    # 3 classes x 5 samples, 4 clients x 1 shard: shard sizes 4,4,4,3 straddle boundaries
    ds = data.Dataset(np.zeros((15, 1)), np.repeat(np.arange(3), 5), 3)
    plan = data.partition_noniid_sorted(ds, 4, 1, 0)
    distinct = ((data.label_histograms(ds, plan)) > 0).sum(axis=1)
    assert distinct.max() <= 2
    assert sorted(plan.sizes()) == [3, 4, 4, 4]
    assert_exact_partition(plan, 15)


def test_sorted_noniid_errors():
    with pytest.raises(PartitionError):
        data.partition_noniid_sorted(balanced(2, 2), 3, 2, 0)
    with pytest.raises(PartitionError):
        data.partition_noniid_sorted(balanced(2, 2), 2, 0, 0)


def test_partition_reproducible_and_json_roundtrip():
    ds = balanced(5, 20)
    a = data.partition_noniid_sorted(ds, 10, 2, 4)
    b = data.partition_noniid_sorted(ds, 10, 2, 4)
    assert all(np.array_equal(x, y) for x, y in zip(a.assignments, b.assignments))
    c = data.PartitionPlan.from_json(a.to_json())
    assert c.mode == a.mode and c.seed == a.seed and c.params == a.params
    assert all(np.array_equal(x, y) for x, y in zip(a.assignments, c.assignments))


def test_partition_json_rejects_unknown_mode():
    with pytest.raises(FormatError):
        data.PartitionPlan.from_json('{"mode": "weird", "seed": 0, "clients": {}}')


@given(
    n=st.integers(1, 400),
    clients=st.integers(1, 40),
    seed=st.integers(0, 2**32 - 1),
)
def test_iid_partition_property(n, clients, seed):
    ds = data.Dataset(np.zeros((n, 1)), np.zeros(n, int), 1)
    if n < clients:
        with pytest.raises(PartitionError):
            data.partition_iid(ds, clients, seed)
        return
    plan = data.partition_iid(ds, clients, seed)
    assert sorted(np.concatenate(plan.assignments).tolist()) == list(range(n))
    assert max(plan.sizes()) - min(plan.sizes()) <= 1


# ---------------------------------------------------------------- shared pool


def test_shared_pool_stratified():
    ds = balanced(10, 60)
    pool, rest = data.extract_shared_pool(ds, data.SharedPoolConfig(0.1), 0)
    assert len(pool) == 60 and pool.label_histogram().tolist() == [6] * 10
    assert len(rest) == 540


def test_shared_pool_half():
    ds = balanced(4, 25)
    pool, rest = data.extract_shared_pool(ds, data.SharedPoolConfig(0.5), 0)
    assert len(pool) == len(rest) == 50


def test_shared_pool_too_small():
    with pytest.raises(ConfigError):
        data.extract_shared_pool(balanced(10, 5), data.SharedPoolConfig(0.1), 0)


@pytest.mark.parametrize("gamma,alpha", [(0.0, 1.0), (1.0, 0.5), (0.2, 1.5), (0.2, -0.1)])
def test_shared_pool_config_ranges(gamma, alpha):
    with pytest.raises(ConfigError):
        data.SharedPoolConfig(gamma, alpha)


@given(
    counts=st.lists(st.integers(1, 40), min_size=2, max_size=8),
    gamma=st.floats(0.05, 0.95),
    seed=st.integers(0, 10_000),
)
def test_shared_pool_property(counts, gamma, seed):
    labels = np.repeat(np.arange(len(counts)), counts)
    ds = data.Dataset(np.zeros((len(labels), 1)), labels, len(counts))
    if gamma * len(ds) < ds.class_count:
        with pytest.raises(ConfigError):
            data.shared_pool_indices(ds, gamma, seed)
        return
    pool, rest = data.shared_pool_indices(ds, gamma, seed)
    assert sorted(np.concatenate([pool, rest]).tolist()) == list(range(len(ds)))
    assert len(np.intersect1d(pool, rest)) == 0
    assert len(pool) == int(np.floor(gamma * len(ds) + 0.5))
    got = np.bincount(labels[pool], minlength=len(counts))
    assert np.all(np.abs(got - gamma * np.asarray(counts)) < 1.0 + 1e-9)
