import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icnn_dcopf.audits import single_bus_dataset
from icnn_dcopf.cases import single_bus_case
from icnn_dcopf.datasets import Dataset
from icnn_dcopf.exceptions import DimensionMismatch, NonFiniteLoss
from icnn_dcopf.grid import build_flow_basis
from icnn_dcopf.icnn.network import (IcnnModel, forward, init_icnn, input_gradient, is_convex_on,
                                     parameter_gradients, project, value_and_gradient)
from icnn_dcopf.icnn.training import TrainConfig, init_for_data, loss_trend_decreasing, train


def _random_model(seed, d=3, hidden=(5, 4)):
    model = init_icnn(d, hidden, seed=seed)
    rng = np.random.default_rng(seed)
    model.b = [rng.normal(size=b.shape) for b in model.b]
    model.c_out = rng.uniform(0.5, 1.5, model.c_out.shape)
    return model


@pytest.mark.parametrize("seed", range(10))
def test_input_gradient_matches_finite_difference(seed):
    model = _random_model(seed)
    x = np.random.default_rng(seed + 100).normal(size=3)
    g = input_gradient(model, x)
    h = 1e-6
    fd = [(forward(model, x + h * e) - forward(model, x - h * e)) / (2 * h) for e in np.eye(3)]
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-7)


def _loss(model, L, tJ, tmu):
    J, mu = value_and_gradient(model, L)
    return np.sum((J - tJ) ** 2) + np.sum((mu - tmu) ** 2)


@pytest.mark.parametrize("seed", range(5))
def test_parameter_gradients_match_finite_difference(seed):
    model = _random_model(seed)
    rng = np.random.default_rng(seed)
    L = rng.normal(size=(4, 3))
    tJ, tmu = rng.normal(size=4), rng.normal(size=(4, 3))
    J, mu = value_and_gradient(model, L)
    grads = parameter_gradients(model, L, (2 * (J - tJ), 2 * (mu - tmu)))
    h = 1e-6
    for p, g in zip(model.parameters(), grads.arrays()):
        for idx in list(np.ndindex(p.shape))[:6]:
            old = p[idx]
            p[idx] = old + h
            up = _loss(model, L, tJ, tmu)
            p[idx] = old - h
            down = _loss(model, L, tJ, tmu)
            p[idx] = old
            assert (up - down) / (2 * h) == pytest.approx(g[idx], rel=1e-4, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 1.0))
def test_projected_model_is_convex(seed, t):
    model = project(init_icnn(2, (6, 6), seed=seed % 1000))
    rng = np.random.default_rng(seed)
    assert is_convex_on(model, rng.normal(size=2) * 3, rng.normal(size=2) * 3, t)


def test_projection_idempotent_and_nonnegative():
    model = init_icnn(2, (4, 4, 4), seed=1)
    model.Wz[1][0, 0] = -3.0
    once = project(model.copy())
    twice = project(once.copy())
    assert all(np.array_equal(a, b) for a, b in zip(once.Wz[1:], twice.Wz[1:]))
    assert all(np.all(w >= 0) for w in once.Wz[1:])


def test_serialization_roundtrip(tmp_path):
    model = _random_model(2)
    path = tmp_path / "m.json"
    model.save(path)
    again = IcnnModel.load(path)
    L = np.random.default_rng(0).normal(size=(5, 3))
    assert np.array_equal(forward(model, L), forward(again, L))


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        forward(init_icnn(3, (4,)), np.zeros(2))


def test_zero_epochs_leaves_model_unchanged():
    data = single_bus_dataset(np.linspace(0.2, 2.8, 10))
    model = init_for_data(data, (4,), seed=0)
    res = train(model, data, None, TrainConfig(hidden=(4,), epochs=0, kkt_weight=0.0))
    assert all(np.array_equal(a, b) for a, b in zip(model.parameters(), res.model.parameters()))
    assert res.history == []


def test_training_is_deterministic():
    data = single_bus_dataset(np.linspace(0.2, 2.8, 20))
    cfg = TrainConfig(hidden=(8, 8), epochs=20, batch_size=5, kkt_weight=0.0, seed=7)
    a = train(init_for_data(data, cfg.hidden, 7), data, None, cfg)
    b = train(init_for_data(data, cfg.hidden, 7), data, None, cfg)
    assert a.history == b.history
    assert all(np.array_equal(x, y) for x, y in zip(a.model.parameters(), b.model.parameters()))


def test_single_bus_training_learns_prices():
    """200 samples over all three segments, two hidden layers of 16 units."""
    case = single_bus_case()
    basis = build_flow_basis(case)
    rng = np.random.default_rng(0)
    train_set = single_bus_dataset(rng.uniform(0.0, 3.0, 200))
    full = Dataset(np.c_[train_set.load, np.zeros((200, 2))], train_set.J,
                   np.repeat(train_set.mu, 3, axis=1))
    cfg = TrainConfig(hidden=(16, 16), epochs=300, batch_size=20, optimizer="adam",
                      learning_rate=0.01, lr_decay=0.99, kkt_weight=0.0)
    res = train(init_for_data(full, cfg.hidden, 0), full, None, cfg, case, basis)
    test = rng.uniform(0.0, 3.0, 200)
    test = test[np.min(np.abs(test[:, None] - [1.0, 2.0]), axis=1) > 0.1]
    mu = value_and_gradient(res.model, np.c_[test, np.zeros((len(test), 2))])[1][:, 0]
    err = np.abs(mu - np.select([test < 1, test < 2], [1.0, 2.0], 3.0))
    assert err.mean() < 0.05
    assert loss_trend_decreasing(res.history)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts_with_batch():
    data = single_bus_dataset(np.linspace(0.2, 2.8, 8))
    data.J[3] = np.inf
    with pytest.raises(NonFiniteLoss) as info:
        train(init_for_data(data, (4,), 0), data, None,
              TrainConfig(hidden=(4,), epochs=1, batch_size=8, kkt_weight=0.0))
    assert 3 in info.value.batch["labeled"]


def test_helper_only_kkt_training_runs():
    case = single_bus_case()
    basis = build_flow_basis(case)
    lab = single_bus_dataset(np.linspace(0.2, 2.8, 10))
    lab = Dataset(np.c_[lab.load, np.zeros((10, 2))], lab.J, np.repeat(lab.mu, 3, axis=1),
                  np.zeros((10, 3)), np.zeros((10, 2)))
    helper = Dataset(np.c_[np.linspace(0.1, 2.9, 6), np.zeros((6, 2))])
    cfg = TrainConfig(hidden=(4,), epochs=3, batch_size=5, kkt_on_labeled=False)
    res = train(init_for_data(lab, cfg.hidden, 0), lab, helper, cfg, case, basis)
    assert len(res.history) == 3 and np.isfinite(res.history[-1]["loss"])
