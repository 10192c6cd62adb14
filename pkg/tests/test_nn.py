import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedsim import nn, seeding
from fedsim.errors import ConfigError, EmptyClientData, EvaluationError, ShapeError

from conftest import central_differences, max_rel_error


def random_batch(rng, n, d, classes):
    return nn.Batch(rng.uniform(0, 1, size=(n, d)), rng.integers(0, classes, size=n))


def test_parameter_counts():
    assert nn.ModelArch.logreg(784, 10).n_params == 7850
    assert nn.ModelArch.mlp(784, [200], 10).n_params == 159_010


@pytest.mark.parametrize("sizes", [(5,), (3, 0, 2), (0, 4)])
def test_invalid_arch(sizes):
    with pytest.raises(ConfigError):
        nn.ModelArch(sizes)


def test_init_is_deterministic_and_glorot_bounded():
    arch = nn.ModelArch.mlp(20, [7], 3)
    a = nn.init_model(arch, 42)
    b = nn.init_model(arch, 42)
    assert a.values.tobytes() == b.values.tobytes()
    assert not np.array_equal(a.values, nn.init_model(arch, 43).values)
    (W1, b1), (W2, b2) = a.layers()
    assert np.all(np.abs(W1) <= math.sqrt(6 / 27)) and np.all(np.abs(W2) <= math.sqrt(6 / 10))
    assert not b1.any() and not b2.any()


def test_zero_logreg_loss_is_log_classes():
    arch = nn.ModelArch.logreg(4, 10)
    params = nn.ModelParams(arch, np.zeros(arch.n_params))
    batch = nn.Batch(np.random.default_rng(0).uniform(size=(6, 4)), [0, 1, 2, 3, 4, 9])
    loss, _ = nn.forward_loss(params, batch)
    assert loss == pytest.approx(math.log(10), abs=1e-12)


def test_two_class_closed_form_loss():
    # logits (1, 0) for true class 0: loss = log(1 + e^-1)
    arch = nn.ModelArch.logreg(1, 2)
    params = nn.ModelParams(arch, [0.0, 0.0, 1.0, 0.0])  # W = 0, b = (1, 0)
    loss, logits = nn.forward_loss(params, nn.Batch([[0.5]], [0]))
    assert logits.tolist() == [[1.0, 0.0]]
    assert loss == pytest.approx(0.31326168751822286, abs=1e-12)
    assert loss == pytest.approx(math.log1p(math.exp(-1)), abs=1e-15)


def test_confident_logits_give_near_zero_loss():
    arch = nn.ModelArch.logreg(1, 3)
    params = nn.ModelParams(arch, [0, 0, 0, 60.0, 0, 0])
    loss, _ = nn.forward_loss(params, nn.Batch([[1.0]], [0]))
    assert 0.0 <= loss < 1e-20


def test_shape_mismatch():
    params = nn.init_model(nn.ModelArch.logreg(4, 3), 0)
    with pytest.raises(ShapeError):
        nn.forward_loss(params, nn.Batch(np.zeros((2, 5)), [0, 1]))
    with pytest.raises(ShapeError):
        nn.sgd_step(params, np.zeros(3), 0.1)


def test_zero_logreg_bias_gradient_closed_form():
    arch = nn.ModelArch.logreg(3, 10)
    params = nn.ModelParams(arch, np.zeros(arch.n_params))
    labels = np.array([2, 2, 7, 0])
    batch = nn.Batch(np.random.default_rng(1).uniform(size=(4, 3)), labels)
    g = nn.gradient(params, batch)
    expected = np.full(10, 0.1) - np.eye(10)[labels].mean(axis=0)
    np.testing.assert_allclose(g[30:], expected, atol=1e-15)


def test_duplicated_batch_has_same_gradient():
    rng = np.random.default_rng(2)
    params = nn.init_model(nn.ModelArch.mlp(6, [5], 4), 1)
    b = random_batch(rng, 7, 6, 4)
    doubled = nn.Batch(np.vstack([b.features, b.features]), np.concatenate([b.labels, b.labels]))
    np.testing.assert_allclose(nn.gradient(params, doubled), nn.gradient(params, b), rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("sizes", [(6, 4), (6, 5, 4), (6, 5, 3, 4)])
def test_gradient_matches_finite_differences(sizes):
    rng = np.random.default_rng(sum(sizes))
    arch = nn.ModelArch(sizes)
    params = nn.init_model(arch, 7)
    params.values += rng.normal(0, 0.1, size=arch.n_params)
    batch = random_batch(rng, 20, sizes[0], sizes[-1])
    f = lambda v: nn.forward_loss(nn.ModelParams(arch, v), batch)[0]  # noqa: E731
    assert max_rel_error(nn.gradient(params, batch), central_differences(f, params.values)) < 1e-4


def test_feature_penalty_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    arch = nn.ModelArch.mlp(4, [6], 3)
    params = nn.init_model(arch, 3)
    batch = random_batch(rng, 9, 4, 3)
    target = rng.normal(size=(9, 6))

    def penalty(feats):
        diff = feats - target
        return 0.5 * float((diff**2).sum()), diff

    f = lambda v: nn.loss_and_gradient(nn.ModelParams(arch, v), batch, penalty)[0]  # noqa: E731
    _, g = nn.loss_and_gradient(params, batch, penalty)
    assert max_rel_error(g, central_differences(f, params.values)) < 1e-4


@given(st.integers(0, 10_000))
def test_loss_nonnegative_and_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    arch = nn.ModelArch.mlp(5, [4], 3)
    params = nn.init_model(arch, seed)
    params.values *= 3.0
    batch = random_batch(rng, 8, 5, 3)
    perm = rng.permutation(8)
    shuffled = nn.Batch(batch.features[perm], batch.labels[perm])
    l1, g1 = nn.loss_and_gradient(params, batch)
    l2, g2 = nn.loss_and_gradient(params, shuffled)
    assert l1 >= 0.0
    assert l1 == pytest.approx(l2, rel=1e-12)
    np.testing.assert_allclose(g1, g2, rtol=1e-10, atol=1e-14)


def test_sgd_step_examples():
    arch = nn.ModelArch((1, 1))  # two parameters: one weight, one bias
    p = nn.ModelParams(arch, [1.0, 1.0])
    assert nn.sgd_step(p, np.array([2.0, -2.0]), 0.5).values.tolist() == [0.0, 2.0]
    assert nn.sgd_step(p, np.array([2.0, -2.0]), 0.0).values.tolist() == [1.0, 1.0]
    zero = nn.ModelParams(arch, [0.0, 0.0])
    assert nn.sgd_step(zero, np.array([3.0, -4.0]), 1.0).values.tolist() == [-3.0, 4.0]


def test_minibatch_split_keeps_short_tail():
    assert [s.stop - s.start for s in nn.minibatch_slices(50, 20)] == [20, 20, 10]


def test_one_epoch_full_batch_equals_single_gradient_step(blobs):
    train, _ = blobs
    X, y = train.features[:20], train.labels[:20]
    params = nn.init_model(nn.ModelArch.mlp(8, [5], 10), 0)
    trained = nn.local_train(params, X, y, 1, 20, 0.1, seeding.stream(0, 99))
    expected = nn.sgd_step(params, nn.gradient(params, nn.Batch(X, y)), 0.1)
    np.testing.assert_allclose(trained.values, expected.values, rtol=0, atol=1e-15)


def test_local_train_counts_steps_and_is_deterministic(blobs, monkeypatch):
    train, _ = blobs
    X, y = train.features[:50], train.labels[:50]
    params = nn.init_model(nn.ModelArch.logreg(8, 10), 0)
    sizes = []
    real = nn.loss_and_gradient

    def spy(p, batch, penalty=None):
        sizes.append(len(batch.labels))
        return real(p, batch, penalty)

    monkeypatch.setattr(nn, "loss_and_gradient", spy)
    a = nn.local_train(params, X, y, 2, 20, 0.05, seeding.stream(4, 1))
    assert sizes == [20, 20, 10, 20, 20, 10]
    b = nn.local_train(params, X, y, 2, 20, 0.05, seeding.stream(4, 1))
    assert a.values.tobytes() == b.values.tobytes()
    assert params.values.tobytes() == nn.init_model(nn.ModelArch.logreg(8, 10), 0).values.tobytes()


def test_local_train_rejects_empty_data():
    params = nn.init_model(nn.ModelArch.logreg(3, 2), 0)
    with pytest.raises(EmptyClientData):
        nn.local_train(params, np.zeros((0, 3)), np.zeros(0, int), 1, 4, 0.1, seeding.stream(0, 0))


def test_evaluate_examples():
    arch = nn.ModelArch.logreg(2, 2)
    # logits = x @ W with W = I: predicts argmax of the features
    params = nn.ModelParams(arch, [1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    X = np.array([[1.0, 0.0], [0.0, 1.0], [0.2, 0.9]])
    assert nn.evaluate(params, X, np.array([0, 1, 1]))[0] == 1.0
    # third sample predicted 1 but labelled 0 -> 2/3
    assert nn.evaluate(params, X, np.array([0, 1, 0]))[0] == pytest.approx(2 / 3)


def test_zero_model_predicts_class_zero_on_ties():
    arch = nn.ModelArch.logreg(3, 10)
    params = nn.ModelParams(arch, np.zeros(arch.n_params))
    labels = np.repeat(np.arange(10), 5)
    X = np.random.default_rng(0).uniform(size=(50, 3))
    assert set(nn.predict(params, X)) == {0}
    assert nn.evaluate(params, X, labels)[0] == pytest.approx(0.1)


def test_evaluate_empty():
    params = nn.init_model(nn.ModelArch.logreg(3, 2), 0)
    with pytest.raises(EvaluationError):
        nn.evaluate(params, np.zeros((0, 3)), np.zeros(0, int))
