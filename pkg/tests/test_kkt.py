import numpy as np
import pytest

from icnn_dcopf.cases import congested_triangle_case, single_bus_case
from icnn_dcopf.datasets import generate_dataset
from icnn_dcopf.grid import build_flow_basis
from icnn_dcopf.icnn.kkt import (KktCandidates, augmented_residual, kkt_value_and_grad, dual_from_prices, kkt_fixed_point_check,
                                 loss_kkt, loss_regression, violation_degrees)
from icnn_dcopf.icnn.network import init_icnn, value_and_gradient
from icnn_dcopf.lp import solve_dcopf


def test_dual_from_prices_stationarity():
    mu = np.array([0.5, 2.0, 3.5])
    c = np.array([1.0, 2.0, 3.0])
    lo, hi = dual_from_prices(mu, c)
    assert np.all(lo >= 0) and np.all(hi >= 0)
    assert np.allclose(c - lo + hi - mu, 0.0)


def test_violation_degrees_zero_at_optimum():
    case = congested_triangle_case()
    basis = build_flow_basis(case)
    data = generate_dataset(case, 0.4, 30, seed=2).nondegenerate()
    for i in range(len(data)):
        v = violation_degrees(case, basis, data.load[i], data.mu[i], data.x[i], data.f[i])
        assert v.is_zero(1e-6)


def test_fixed_point_and_kkt_agree_on_perturbations():
    case = congested_triangle_case()
    basis = build_flow_basis(case)
    sol = solve_dcopf(case, basis, case.load_nominal)
    assert kkt_fixed_point_check(case, basis, sol) == (True, True)
    rng = np.random.default_rng(0)
    base = (sol.mu, sol.tau_lo, sol.tau_hi, sol.lam_lo, sol.lam_hi)
    for _ in range(30):
        duals = tuple(np.maximum(d + rng.normal(0, 0.5, d.shape), 0.0) if k else d + rng.normal(0, 0.5, d.shape)
                      for k, d in enumerate(base))
        assert kkt_fixed_point_check(case, basis, sol, duals=duals) == (False, False)


def test_regression_loss_examples():
    model = init_icnn(1, (4,), seed=0)
    J, mu = value_and_gradient(model, np.array([[0.3]]))
    assert loss_regression(model, [[0.3]], J, mu)[0] == pytest.approx(0.0)
    assert loss_regression(model, [[0.3]], J + 1.0, mu)[0] == pytest.approx(1.0)


def test_loss_kkt_empty_batch_is_zero():
    case = single_bus_case()
    basis = build_flow_basis(case)
    model = init_icnn(3, (4,), seed=0)
    value, (gJ, gmu) = loss_kkt(model, case, basis, np.zeros((0, 3)))
    assert value == 0.0 and gmu.shape == (0, 3)


def test_kkt_price_gradient_matches_finite_difference():
    case = congested_triangle_case()
    basis = build_flow_basis(case)
    rng = np.random.default_rng(4)
    loads = np.array([[0.5, 0.5, 3.0], [0.7, 0.2, 2.5]])
    cand = KktCandidates(x=rng.uniform(0, 4, (2, 3)), f=rng.normal(size=(2, 2)))
    mu = rng.uniform(0, 5, (2, 3))
    _, grad = kkt_value_and_grad(case, basis, loads, mu, cand)
    h = 1e-7
    for idx in np.ndindex(mu.shape):
        d = np.zeros_like(mu)
        d[idx] = h
        fd = (kkt_value_and_grad(case, basis, loads, mu + d, cand)[0]
              - kkt_value_and_grad(case, basis, loads, mu - d, cand)[0]) / (2 * h)
        assert fd == pytest.approx(grad[idx], abs=1e-5)


def test_loss_kkt_zero_at_labels(monkeypatch):
    case = congested_triangle_case()
    basis = build_flow_basis(case)
    sol = solve_dcopf(case, basis, case.load_nominal)

    class Exact:
        input_dim = 3

    monkeypatch.setattr("icnn_dcopf.icnn.kkt.value_and_gradient",
                        lambda model, L: (np.zeros(len(L)), np.tile(sol.mu, (len(L), 1))))
    value, _ = loss_kkt(Exact(), case, basis, case.load_nominal[None], sol.x[None], sol.f[None])
    assert value < 1e-8


def test_augmented_residual_sign_around_optimum():
    case = congested_triangle_case()
    basis = build_flow_basis(case)
    sol = solve_dcopf(case, basis, case.load_nominal)
    r0 = augmented_residual(case, basis, case.load_nominal, sol.mu, rho=1.0)
    assert np.max(np.abs(r0)) < 1e-2
    # prices too high pull in too much generation: negative residual
    assert augmented_residual(case, basis, case.load_nominal, sol.mu + 3.0, rho=1.0).sum() < 0
    assert augmented_residual(case, basis, case.load_nominal, sol.mu - 3.0, rho=1.0).sum() > 0


def test_violation_degree_hand_example():
    case = congested_triangle_case()
    basis = build_flow_basis(case)
    sol = solve_dcopf(case, basis, case.load_nominal)
    base = violation_degrees(case, basis, sol.load, sol.mu, sol.x, sol.f)
    x = sol.x.copy()
    # push a generator strictly above its limit; only its upper-bound degree moves
    i = 0
    x[i] = case.xmax[i] + 0.1
    v = violation_degrees(case, basis, sol.load, sol.mu, x, sol.f)
    assert v.tau_hi[i] == pytest.approx(0.1)
    assert np.allclose(np.delete(v.tau_hi, i), np.delete(base.tau_hi, i))


def test_zero_everything_is_zero_violation():
    case = congested_triangle_case()
    basis = build_flow_basis(case)
    mu = np.full(3, 0.5)
    v = violation_degrees(case, basis, np.zeros(3), mu, np.zeros(3), np.zeros(2))
    assert v.is_zero(1e-12)
