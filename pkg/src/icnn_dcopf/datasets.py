"""Solved-sample datasets and their JSON-lines format."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import InfeasibleRateTooHigh
from .grid import FlowBasis, GridCase, build_flow_basis
from .lp import SolverConfig, solve_dcopf


@dataclass
class Dataset:
    """Loads with their optimal cost, prices and dispatch.

    Unlabeled (helper) sets carry only ``load``; the other fields are ``None``.
    """

    load: np.ndarray
    J: np.ndarray | None = None
    mu: np.ndarray | None = None
    x: np.ndarray | None = None
    f: np.ndarray | None = None
    degenerate: np.ndarray | None = None

    def __post_init__(self):
        self.load = np.atleast_2d(np.asarray(self.load, dtype=float))
        if self.degenerate is None and self.J is not None:
            self.degenerate = np.zeros(len(self.load), dtype=bool)

    def __len__(self):
        return self.load.shape[0]

    @property
    def labeled(self) -> bool:
        return self.J is not None

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        if idx.size == 0:
            idx = idx.astype(int)
        pick = (lambda a: None if a is None else a[idx])
        return Dataset(self.load[idx], pick(self.J), pick(self.mu), pick(self.x),
                       pick(self.f), pick(self.degenerate))

    def nondegenerate(self) -> "Dataset":
        if self.degenerate is None:
            return self
        return self.subset(np.flatnonzero(~self.degenerate))

    def unlabeled(self) -> "Dataset":
        return Dataset(self.load.copy())

    def split(self, test_fraction=0.2, seed=0):
        """Random train/test split, deterministic in ``seed``."""
        order = np.random.default_rng(seed).permutation(len(self))
        n_test = int(round(test_fraction * len(self)))
        return self.subset(np.sort(order[n_test:])), self.subset(np.sort(order[:n_test]))

    @classmethod
    def concat(cls, parts) -> "Dataset":
        parts = [p for p in parts if len(p)]
        if not parts:
            raise ValueError("nothing to concatenate")
        if all(p.labeled for p in parts):
            cat = (lambda name: np.concatenate([getattr(p, name) for p in parts]))
            return cls(cat("load"), cat("J"), cat("mu"), cat("x"), cat("f"), cat("degenerate"))
        return cls(np.concatenate([p.load for p in parts]))

    def records(self):
        for i in range(len(self)):
            rec = {"load": self.load[i].tolist()}
            if self.labeled:
                rec.update({"J": float(self.J[i]), "mu": self.mu[i].tolist(),
                            "x": self.x[i].tolist(), "f": self.f[i].tolist(),
                            "degenerate": bool(self.degenerate[i])})
            yield rec

    def save(self, path):
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def load_jsonl(cls, path) -> "Dataset":
        recs = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
        if not recs:
            raise ValueError(f"{path} holds no records")
        load = np.array([r["load"] for r in recs], dtype=float)
        if "J" not in recs[0]:
            return cls(load)
        return cls(load,
                   np.array([r["J"] for r in recs], dtype=float),
                   np.array([r["mu"] for r in recs], dtype=float),
                   np.array([r["x"] for r in recs], dtype=float),
                   np.array([r["f"] for r in recs], dtype=float).reshape(len(recs), -1),
                   np.array([r["degenerate"] for r in recs], dtype=bool))


def solve_loads(case: GridCase, loads, basis: FlowBasis | None = None,
                config: SolverConfig | None = None):
    """Solve every load row; returns ``(dataset, infeasible_count)``."""
    basis = basis or build_flow_basis(case)
    kept = {"load": [], "J": [], "mu": [], "x": [], "f": [], "degenerate": []}
    infeasible = 0
    for load in np.atleast_2d(loads):
        sol = solve_dcopf(case, basis, load, config)
        if not sol.feasible:
            infeasible += 1
            continue
        kept["load"].append(load)
        kept["J"].append(sol.J)
        kept["mu"].append(sol.mu)
        kept["x"].append(sol.x)
        kept["f"].append(sol.f)
        kept["degenerate"].append(sol.degenerate)
    if not kept["load"]:
        return Dataset(np.zeros((0, case.n)), np.zeros(0), np.zeros((0, case.n)),
                       np.zeros((0, case.n)), np.zeros((0, case.n - 1)),
                       np.zeros(0, dtype=bool)), infeasible
    return Dataset(np.array(kept["load"]), np.array(kept["J"]), np.array(kept["mu"]),
                   np.array(kept["x"]), np.array(kept["f"]).reshape(len(kept["load"]), -1),
                   np.array(kept["degenerate"], dtype=bool)), infeasible


def sample_loads(case: GridCase, variation: float, count: int, seed: int = 0) -> np.ndarray:
    """Uniform draws in ``[(1-v) * nominal, (1+v) * nominal]`` per bus."""
    rng = np.random.default_rng(seed)
    lo = (1.0 - variation) * case.load_nominal
    hi = (1.0 + variation) * case.load_nominal
    return lo + (hi - lo) * rng.random((count, case.n))


def generate_dataset(case: GridCase, variation: float, count: int, seed: int = 0,
                     max_infeasible_rate: float = 0.5, config: SolverConfig | None = None) -> Dataset:
    """Sample ``count`` loads, solve each, and drop infeasible draws.

    Raises :class:`InfeasibleRateTooHigh` if more than half the draws cannot
    be served, which usually means the case capacities are too tight for the
    requested variation.
    """
    loads = sample_loads(case, variation, count, seed)
    data, infeasible = solve_loads(case, loads, config=config)
    if count and infeasible / count > max_infeasible_rate:
        raise InfeasibleRateTooHigh(
            f"{infeasible} of {count} draws infeasible; reduce the variation or raise capacities")
    return data
