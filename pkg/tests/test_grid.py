import json

import numpy as np
import pytest

from icnn_dcopf.cases import ieee14_like_case, random_case, triangle_case
from icnn_dcopf.exceptions import CaseError, DisconnectedGraph
from icnn_dcopf.grid import GridCase, build_flow_basis, load_case, recover_angles, save_case, spanning_tree


def test_basis_reproduces_kirchhoff_flows():
    case = ieee14_like_case()
    basis = build_flow_basis(case)
    rng = np.random.default_rng(0)
    theta = np.r_[0.0, rng.normal(size=case.n - 1)]
    flows = case.susceptance * (case.incidence() @ theta)
    f = flows[list(basis.tree_edges)]
    assert np.allclose(basis.K @ f, flows)
    assert np.allclose(basis.A_tilde @ f, -case.incidence().T @ flows)
    assert np.allclose(recover_angles(basis, case, f), theta)


def test_tree_rows_of_K_are_identity():
    case = triangle_case()
    basis = build_flow_basis(case)
    assert basis.K.shape == (case.m, case.n - 1)
    assert np.allclose(basis.K[list(basis.tree_edges)], np.eye(case.n - 1))


def test_spanning_tree_is_greedy_in_file_order():
    case = triangle_case()
    assert spanning_tree(case)[0] == (0, 1)
    assert build_flow_basis(case).tree_edges == (0, 1)


@pytest.mark.parametrize("seed", range(5))
def test_random_cases_balance_columns(seed):
    case = random_case(6, extra_lines=3, seed=seed)
    basis = build_flow_basis(case)
    # every fundamental flow is a pure transfer: imports sum to zero
    assert np.allclose(basis.A_tilde.sum(axis=0), 0.0)


def test_disconnected_graph_rejected():
    with pytest.raises(DisconnectedGraph):
        build_flow_basis(GridCase.from_lines(3, [(0, 1, 1.0, 1.0)], cost=[1, 1, 1], xmax=[1, 1, 1]))


def test_case_roundtrip_and_nan_rejected(tmp_path):
    case = ieee14_like_case()
    path = tmp_path / "case.json"
    save_case(case, path)
    again = load_case(path)
    assert again.to_dict() == case.to_dict()
    doc = json.loads(path.read_text())
    path.write_text(json.dumps(doc).replace(str(doc["c"][0]), "NaN", 1))
    with pytest.raises(CaseError):
        load_case(path)


def test_negative_limits_rejected():
    with pytest.raises(CaseError):
        GridCase.from_lines(2, [(0, 1, 1.0, -1.0)], cost=[1, 2], xmax=[1, 1])
