import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icnn_dcopf.cases import random_case, single_bus_case, two_bus_case
from icnn_dcopf.exceptions import TooLarge
from icnn_dcopf.grid import build_flow_basis
from icnn_dcopf.lp import (LpProblem, Status, cost_curve, curve_slopes, dcopf_problem,
                           enumerate_vertices, solve_dcopf, solve_lp, vertex_optimum)


@st.composite
def bounded_lps(draw):
    nvar = draw(st.integers(1, 6))
    nub = draw(st.integers(0, 4))
    neq = draw(st.integers(0, 1))
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    c = rng.normal(size=nvar)
    hi = rng.uniform(0.5, 3.0, nvar)
    x0 = rng.uniform(0, 1, nvar) * hi
    A_ub = rng.normal(size=(nub, nvar))
    b_ub = A_ub @ x0 + rng.uniform(0.0, 1.0, nub)
    A_eq = rng.normal(size=(neq, nvar))
    b_eq = A_eq @ x0
    return LpProblem(c=c, A_ub=A_ub if nub else None, b_ub=b_ub if nub else None,
                     A_eq=A_eq if neq else None, b_eq=b_eq if neq else None, hi=hi)


@settings(max_examples=150, deadline=None)
@given(bounded_lps())
def test_simplex_matches_vertex_enumeration(problem):
    res = solve_lp(problem)
    assert res.optimal
    best = vertex_optimum(problem)
    assert best is not None
    assert abs(res.objective - best) <= 1e-8 * (1.0 + abs(best))


@settings(max_examples=100, deadline=None)
@given(bounded_lps())
def test_dual_certificate(problem):
    """Strong duality: c @ x equals the dual objective built from the returned duals."""
    res = solve_lp(problem)
    dual_obj = problem.b_eq @ res.eq_duals + problem.b_ub @ res.ub_duals
    r = res.reduced_costs
    # bound multipliers: positive reduced cost at lo = 0, negative at hi
    dual_obj += np.sum(np.where(r < 0, r * problem.hi, 0.0))
    assert np.all(res.ub_duals <= 1e-9)
    assert abs(dual_obj - res.objective) <= 1e-7 * (1.0 + abs(res.objective))


def test_infeasible_and_unbounded():
    infeasible = LpProblem(c=[1.0], A_ub=[[1.0]], b_ub=[-1.0])
    assert solve_lp(infeasible).status is Status.INFEASIBLE
    assert vertex_optimum(infeasible) is None
    unbounded = LpProblem(c=[-1.0])
    assert solve_lp(unbounded).status is Status.UNBOUNDED


def test_enumeration_guard():
    with pytest.raises(TooLarge):
        enumerate_vertices(LpProblem(c=np.ones(13)))


def test_degenerate_lp_terminates():
    # several constraints through one vertex; Bland's rule must not cycle
    A = np.array([[1.0, 1.0], [1.0, 2.0], [2.0, 1.0], [1.0, 0.0]])
    res = solve_lp(LpProblem(c=[-1.0, -1.0], A_ub=A, b_ub=[1.0, 1.5, 1.5, 1.0]))
    assert res.optimal and res.objective == pytest.approx(-1.0)


def test_single_bus_prices_and_cost():
    case = single_bus_case()
    basis = build_flow_basis(case)
    for load, J, mu in [(0.5, 0.5, 1.0), (1.5, 2.0, 2.0), (2.5, 4.5, 3.0)]:
        sol = solve_dcopf(case, basis, [load, 0.0, 0.0])
        assert sol.status is Status.OPTIMAL
        assert sol.J == pytest.approx(J, abs=1e-9)
        assert np.allclose(sol.mu, mu)


def test_breakpoint_is_degenerate_and_overload_infeasible():
    case = single_bus_case()
    basis = build_flow_basis(case)
    assert solve_dcopf(case, basis, [1.0, 0.0, 0.0]).degenerate
    assert not solve_dcopf(case, basis, [3.5, 0.0, 0.0]).feasible


def test_two_bus_congestion_splits_prices():
    case = two_bus_case()
    basis = build_flow_basis(case)
    sol = solve_dcopf(case, basis, [1.0, 4.0])
    # line rated 2 binds: bus 1 pays its own generator
    assert np.allclose(sol.mu, [1.0, 3.0])
    assert sol.J == pytest.approx(1.0 * 3.0 + 3.0 * 2.0)


def test_cost_curve_slopes_single_bus():
    case = single_bus_case()
    basis = build_flow_basis(case)
    curve = cost_curve(case, basis, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 31, t_max=3.0)
    slopes = np.round(curve_slopes(curve), 8)
    assert set(slopes) == {1.0, 2.0, 3.0}
    assert np.all(np.diff(slopes) >= 0)


@pytest.mark.parametrize("seed", range(10))
def test_dcopf_duals_are_sensitivities(seed):
    case = random_case(4, extra_lines=1, seed=seed)
    basis = build_flow_basis(case)
    sol = solve_dcopf(case, basis, case.load_nominal)
    if sol.status is not Status.OPTIMAL:
        pytest.skip("degenerate or infeasible draw")
    h = 1e-6
    for i in range(case.n):
        d = np.zeros(case.n)
        d[i] = h
        up = solve_dcopf(case, basis, case.load_nominal + d)
        assert (up.J - sol.J) / h == pytest.approx(sol.mu[i], abs=1e-5)


def test_dcopf_problem_matches_vertex_enumeration():
    case = random_case(4, extra_lines=2, seed=3)
    basis = build_flow_basis(case)
    problem = dcopf_problem(case, basis, case.load_nominal)
    assert solve_dcopf(case, basis, case.load_nominal).J == pytest.approx(vertex_optimum(problem), abs=1e-8)


def _manual_two_bus_basis():
    from icnn_dcopf.grid import FlowBasis
    K = np.array([[1.0]])
    A = np.array([[1.0], [-1.0]])
    return FlowBasis(tree_edges=(0,), K=K, A_tilde=A, angle_map=np.zeros((2, 1)))


def test_flow_dual_recovery_literal_example():
    from icnn_dcopf.activeset import LineStatus, detect_flow_active
    from icnn_dcopf.lp import flow_dual_difference, recover_flow_duals
    basis = _manual_two_bus_basis()
    nu = recover_flow_duals(np.array([1.0, 3.0]), basis, np.array([2.0]), scale="limit")
    assert nu == pytest.approx([-1.0])
    assert flow_dual_difference(nu, [2.0]) == pytest.approx([-0.5])
    assert detect_flow_active(nu, [2.0]) == (LineStatus.AT_NEG,)


def test_flow_dual_recovery_matches_lp_duals():
    from icnn_dcopf.cases import congested_triangle_case
    from icnn_dcopf.lp import flow_dual_difference, recover_flow_duals
    case = two_bus_case()
    basis = build_flow_basis(case)
    sol = solve_dcopf(case, basis, case.load_nominal)
    w = flow_dual_difference(recover_flow_duals(sol.mu, basis, case.fmax), case.fmax)
    assert w == pytest.approx(sol.lam_hi - sol.lam_lo)
    case = congested_triangle_case()
    basis = build_flow_basis(case)
    sol = solve_dcopf(case, basis, case.load_nominal)
    w = flow_dual_difference(recover_flow_duals(sol.mu, basis, case.fmax), case.fmax)
    congested = np.abs(sol.lam_hi - sol.lam_lo) > 1e-9
    assert np.all(np.sign(w[congested]) == np.sign((sol.lam_hi - sol.lam_lo)[congested]))


def test_uniform_prices_give_zero_flow_duals():
    from icnn_dcopf.cases import congested_triangle_case
    from icnn_dcopf.lp import recover_flow_duals
    case = congested_triangle_case()
    assert np.allclose(recover_flow_duals(np.full(3, 2.5), build_flow_basis(case), case.fmax), 0.0)
