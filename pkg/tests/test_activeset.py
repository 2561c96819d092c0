import numpy as np
import pytest

from icnn_dcopf.activeset import (ActiveSet, GenStatus, LineStatus, active_set_from_solution,
                                  detect_flow_active, detect_gen_active, solve_from_prices)
from icnn_dcopf.cases import congested_triangle_case, random_case, single_bus_case
from icnn_dcopf.datasets import generate_dataset
from icnn_dcopf.grid import build_flow_basis
from icnn_dcopf.lp import solve_dcopf


def test_gen_detection_dead_band():
    status = detect_gen_active([0.5, 2.0, 3.5], [1.0, 2.0, 3.0], eps_act=1e-6)
    assert status == (GenStatus.AT_ZERO, GenStatus.FREE, GenStatus.AT_UPPER)
    assert detect_gen_active([0.9], [1.0], eps_act=0.2) == (GenStatus.FREE,)


def test_flow_detection_signs():
    status = detect_flow_active([2.0, -2.0, 0.0], [1.0, 1.0, 1.0])
    assert status == (LineStatus.AT_POS, LineStatus.AT_NEG, LineStatus.FREE)


def test_single_bus_reconstruction():
    case = single_bus_case()
    basis = build_flow_basis(case)
    x, f, diag = solve_from_prices(case, basis, [1.5, 0.0, 0.0], np.full(3, 2.0))
    assert diag.feasible and diag.square
    assert np.allclose(x, [1.0, 0.5, 0.0])


@pytest.mark.parametrize("make", [congested_triangle_case, lambda: random_case(5, 2, seed=4)])
def test_round_trip_reproduces_lp(make):
    case = make()
    basis = build_flow_basis(case)
    data = generate_dataset(case, 0.5, 60, seed=1).nondegenerate()
    assert len(data) > 20
    for i in range(len(data)):
        x, f, diag = solve_from_prices(case, basis, data.load[i], data.mu[i])
        assert diag.feasible
        assert np.allclose(x, data.x[i], atol=1e-6)
        assert np.allclose(f, data.f[i], atol=1e-6)


def test_active_set_matches_primal_activity():
    case = congested_triangle_case()
    basis = build_flow_basis(case)
    sol = solve_dcopf(case, basis, case.load_nominal)
    primal = active_set_from_solution(case, basis, sol.x, sol.f)
    assert detect_gen_active(sol.mu, case.cost) == primal.gen_status


def test_wrong_prices_report_failure_without_raising():
    case = congested_triangle_case()
    basis = build_flow_basis(case)
    x, f, diag = solve_from_prices(case, basis, case.load_nominal, np.full(3, 100.0))
    # every generator at its upper bound overserves the load
    assert not diag.feasible


def test_infeasible_active_set_is_flagged():
    case = single_bus_case()
    basis = build_flow_basis(case)
    x, f, diag = solve_from_prices(case, basis, [0.5, 0.0, 0.0], np.zeros(3))
    assert not diag.feasible
    assert diag.failed_stage == "assemble"
