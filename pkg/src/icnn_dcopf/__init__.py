"""DC optimal power flow with input convex neural network cost surrogates."""
from .datasets import Dataset, generate_dataset
from .grid import GridCase, build_flow_basis, load_case
from .lp import solve_dcopf

__all__ = ["Dataset", "GridCase", "build_flow_basis", "generate_dataset", "load_case", "solve_dcopf"]
__version__ = "0.1.0"
