import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icnn_dcopf.audits import single_bus_dataset
from icnn_dcopf.datasets import Dataset
from icnn_dcopf.exceptions import DegenerateSpan, PreconditionFailed
from icnn_dcopf.genbound import (fingerprint_regions, gradient_polytope, hull_membership,
                                 same_region_check, well_trained_check)
from icnn_dcopf.icnn.network import init_icnn


def test_hull_membership_examples():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    inside, alpha = hull_membership(square, [0.25, 0.5])
    assert inside and alpha @ square == pytest.approx([0.25, 0.5])
    assert hull_membership(square, [1.5, 0.5]) == (False, None)
    # inside the bounding box but outside the triangle
    assert not hull_membership(square[:3], [0.8, 0.8])[0]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_convex_combinations_are_inside(seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(5, 3))
    w = rng.dirichlet(np.ones(5))
    assert hull_membership(P, w @ P)[0]


def test_gradient_polytope_single_bus_interval():
    # slopes 1 at 0.5 and 3 at 2.5 bound the slope at 1.5 to [1, 3]
    poly = gradient_polytope([[0.5], [2.5]], [[1.0], [3.0]], [1.5])
    lo, hi = poly.bounds()
    assert lo[0] == pytest.approx(1.0) and hi[0] == pytest.approx(3.0)
    assert poly.contains([2.0]) and not poly.contains([3.5]) and not poly.contains([0.5])


def test_gradient_polytope_needs_spanning_points():
    with pytest.raises(DegenerateSpan):
        gradient_polytope([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]], np.zeros((3, 2)), [0.5, 0.5])


def test_polytope_contains_true_gradient_of_convex_function():
    rng = np.random.default_rng(3)
    Q = rng.normal(size=(2, 2))
    Q = Q @ Q.T + np.eye(2)
    P = rng.normal(size=(8, 2))
    l = P.mean(axis=0)
    poly = gradient_polytope(P, P @ Q, l)
    assert poly.contains(Q @ l)
    assert poly.bounded


def test_fingerprints_group_by_price():
    data = single_bus_dataset([0.2, 0.5, 1.5, 2.5, 1.2])
    regions = fingerprint_regions(data, cost=np.array([2.0]))
    assert [r.indices for r in regions] == [[0, 1], [2, 4], [3]]
    assert regions[0].to_dict()["size"] == 2


def test_same_region_preconditions():
    model = init_icnn(1, (4,), seed=0)
    mixed = single_bus_dataset([0.5, 1.5])
    with pytest.raises(PreconditionFailed):
        same_region_check(model, mixed, [[1.0]])
    one = single_bus_dataset([1.2, 1.8])
    assert not well_trained_check(model, one)
    with pytest.raises(PreconditionFailed):
        same_region_check(model, one, [[1.5]])
    with pytest.raises(PreconditionFailed):
        same_region_check(model, Dataset(np.zeros((0, 1)), np.zeros(0), np.zeros((0, 1))), [[1.5]])
