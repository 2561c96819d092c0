import numpy as np
import pytest

from icnn_dcopf.cases import (congested_triangle_case, ieee14_like_case, single_bus_case,
                              triangle_case, two_bus_case)
from icnn_dcopf.grid import build_flow_basis


@pytest.fixture
def single_bus():
    case = single_bus_case()
    return case, build_flow_basis(case)


@pytest.fixture
def congested():
    case = congested_triangle_case()
    return case, build_flow_basis(case)


@pytest.fixture(scope="session")
def ieee14():
    case = ieee14_like_case()
    return case, build_flow_basis(case)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SMALL_CASES = [single_bus_case, two_bus_case, triangle_case, congested_triangle_case]
