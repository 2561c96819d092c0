"""Power network description and the fundamental-flow embedding.

A connected network with ``n`` buses and ``m`` lines carries only ``n - 1``
independent flows.  We pick the flows on a spanning tree (lines taken greedily
in file order) as the fundamental ones; every other line flow follows from
the angle model ``f_e = b_e * (theta_from - theta_to)``.

Sign convention: ``K @ f`` gives the flow on every line, positive in the
``from -> to`` direction, and ``A_tilde @ f`` is the net power *imported* by
each bus, so that the nodal balance reads ``x + A_tilde @ f = load``.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import CaseError, DisconnectedGraph, InconsistentFlows


@dataclass(frozen=True)
class GridCase:
    """A DCOPF instance: topology, susceptances, limits and costs.

    Lines are stored column-wise; ``from_bus[e]``, ``to_bus[e]``,
    ``susceptance[e]`` and ``fmax[e]`` describe line ``e``.
    """

    n: int
    from_bus: np.ndarray
    to_bus: np.ndarray
    susceptance: np.ndarray
    fmax: np.ndarray
    cost: np.ndarray
    xmax: np.ndarray
    load_nominal: np.ndarray
    name: str = "case"

    def __post_init__(self):
        for field in ("susceptance", "fmax", "cost", "xmax", "load_nominal"):
            arr = np.asarray(getattr(self, field), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, field, arr)
        for field in ("from_bus", "to_bus"):
            arr = np.asarray(getattr(self, field), dtype=int)
            arr.setflags(write=False)
            object.__setattr__(self, field, arr)
        self.validate()

    @property
    def m(self) -> int:
        return len(self.from_bus)

    @property
    def lines(self):
        return list(zip(self.from_bus.tolist(), self.to_bus.tolist(),
                        self.susceptance.tolist(), self.fmax.tolist()))

    @classmethod
    def from_lines(cls, n, lines, cost, xmax, load_nominal=None, name="case"):
        """Build a case from ``(from, to, b, fmax)`` tuples."""
        lines = list(lines)
        if load_nominal is None:
            load_nominal = np.zeros(n)
        cols = list(zip(*lines)) if lines else [(), (), (), ()]
        return cls(n=n, from_bus=np.array(cols[0], dtype=int),
                   to_bus=np.array(cols[1], dtype=int),
                   susceptance=np.array(cols[2], dtype=float),
                   fmax=np.array(cols[3], dtype=float),
                   cost=cost, xmax=xmax, load_nominal=load_nominal, name=name)

    def validate(self):
        n, m = self.n, self.m
        if n < 1:
            raise CaseError("need at least one bus")
        for field in ("cost", "xmax", "load_nominal"):
            if getattr(self, field).shape != (n,):
                raise CaseError(f"{field} must have length n={n}")
        for field in ("to_bus", "susceptance", "fmax"):
            if getattr(self, field).shape != (m,):
                raise CaseError(f"{field} must have length m={m}")
        arrays = (self.susceptance, self.fmax, self.cost, self.xmax, self.load_nominal)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise CaseError("case data must be finite")
        if m and (self.from_bus.min() < 0 or self.to_bus.min() < 0
                  or self.from_bus.max() >= n or self.to_bus.max() >= n):
            raise CaseError("bus index out of range")
        if np.any(self.from_bus == self.to_bus):
            raise CaseError("self-loop lines are not allowed")
        if np.any(self.susceptance <= 0):
            raise CaseError("susceptances must be strictly positive")
        if np.any(self.fmax < 0) or np.any(self.xmax < 0):
            raise CaseError("limits must be nonnegative")
        if np.any(self.cost < 0) or not np.any(self.cost > 0):
            raise CaseError("cost must be nonnegative with a positive entry")

    def incidence(self) -> np.ndarray:
        """Line-bus incidence, +1 at the from bus and -1 at the to bus (m x n)."""
        A = np.zeros((self.m, self.n))
        A[np.arange(self.m), self.from_bus] = 1.0
        A[np.arange(self.m), self.to_bus] = -1.0
        return A

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "lines": [{"from": int(i), "to": int(j), "b": float(b), "fmax": float(f)}
                      for i, j, b, f in self.lines],
            "c": self.cost.tolist(),
            "xmax": self.xmax.tolist(),
            "load_nominal": self.load_nominal.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GridCase":
        try:
            n = int(doc["n"])
            lines = [(int(ln["from"]), int(ln["to"]), float(ln["b"]), float(ln["fmax"]))
                     for ln in doc["lines"]]
            cost = np.asarray(doc["c"], dtype=float)
            xmax = np.asarray(doc["xmax"], dtype=float)
            load = np.asarray(doc.get("load_nominal", np.zeros(n)), dtype=float)
        except (KeyError, TypeError) as exc:
            raise CaseError(f"malformed case document: {exc}") from exc
        return cls.from_lines(n, lines, cost, xmax, load, name=doc.get("name", "case"))


def load_case(path) -> GridCase:
    """Read a case JSON file.  NaN and infinities are rejected."""
    def _reject(token):
        raise CaseError(f"non-finite number {token!r} in case file")

    text = Path(path).read_text()
    return GridCase.from_dict(json.loads(text, parse_constant=_reject))


def save_case(case: GridCase, path):
    Path(path).write_text(json.dumps(case.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class FlowBasis:
    """Spanning-tree flow basis.

    ``K`` (m x (n-1)) maps fundamental flows to all line flows and
    ``A_tilde`` (n x (n-1)) maps them to net nodal imports.  ``angle_map``
    (n x (n-1)) gives the bus angles induced by the fundamental flows, with
    ``theta[0] = 0``.
    """

    tree_edges: tuple
    K: np.ndarray
    A_tilde: np.ndarray
    angle_map: np.ndarray

    @property
    def n(self) -> int:
        return self.A_tilde.shape[0]

    @property
    def m(self) -> int:
        return self.K.shape[0]


def spanning_tree(case: GridCase):
    """Spanning tree taking lines greedily in file order, rooted at bus 0.

    A line joins the tree when it connects two buses not yet linked by
    earlier lines.  Returns ``(tree_edges, parent_edge, order)`` where
    ``order`` lists buses breadth-first from bus 0 along tree lines and
    ``parent_edge[v]`` is the tree line reaching ``v``.
    """
    root = list(range(case.n))

    def find(a):
        while root[a] != a:
            root[a] = root[root[a]]
            a = root[a]
        return a

    tree_edges = []
    for e, (i, j) in enumerate(zip(case.from_bus, case.to_bus)):
        ri, rj = find(i), find(j)
        if ri != rj:
            root[ri] = rj
            tree_edges.append(e)
    if len(tree_edges) < case.n - 1:
        reached = sum(find(v) == find(0) for v in range(case.n))
        raise DisconnectedGraph(
            f"spanning tree reaches {reached} of {case.n} buses")
    adjacency = [[] for _ in range(case.n)]
    for e in tree_edges:
        i, j = case.from_bus[e], case.to_bus[e]
        adjacency[i].append((e, j))
        adjacency[j].append((e, i))
    parent_edge = [-1] * case.n
    seen = [False] * case.n
    seen[0] = True
    order = [0]
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for e, v in adjacency[u]:
            if not seen[v]:
                seen[v] = True
                parent_edge[v] = e
                order.append(v)
                queue.append(v)
    return tuple(tree_edges), parent_edge, order


def build_flow_basis(case: GridCase) -> FlowBasis:
    """Construct ``K`` and ``A_tilde`` from the file-order spanning tree.

    The fundamental flow ``f[k]`` is the flow on ``tree_edges[k]``.  Walking the
    tree from bus 0 gives every angle as a linear function of ``f``; a non-tree
    line then carries ``b_e (theta_from - theta_to)``, which is the cycle
    equation ``sum f_e / b_e = 0`` around its fundamental cycle.
    """
    tree_edges, parent_edge, order = spanning_tree(case)
    n, m = case.n, case.m
    column = {e: k for k, e in enumerate(tree_edges)}
    angle_map = np.zeros((n, n - 1))
    for v in order[1:]:
        e = parent_edge[v]
        k = column[e]
        u = case.to_bus[e] if case.from_bus[e] == v else case.from_bus[e]
        angle_map[v] = angle_map[u]
        # f_e = b_e (theta_from - theta_to)
        if case.from_bus[e] == u:
            angle_map[v, k] -= 1.0 / case.susceptance[e]
        else:
            angle_map[v, k] += 1.0 / case.susceptance[e]

    K = case.susceptance[:, None] * (angle_map[case.from_bus] - angle_map[case.to_bus])
    # tree rows are exact unit vectors; keep them free of rounding
    for e, k in column.items():
        K[e] = 0.0
        K[e, k] = 1.0
    A_tilde = -case.incidence().T @ K
    for arr in (K, A_tilde, angle_map):
        arr.setflags(write=False)
    return FlowBasis(tree_edges=tree_edges, K=K, A_tilde=A_tilde, angle_map=angle_map)


def recover_angles(basis: FlowBasis, case: GridCase, f) -> np.ndarray:
    """Bus angles (``theta[0] = 0``) consistent with fundamental flows ``f``.

    Solved by least squares on the tree-line equations, then checked against
    every line; a large residual means ``K`` is inconsistent with the case.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (case.n - 1,):
        raise ValueError(f"expected {case.n - 1} fundamental flows, got {f.shape}")
    if case.n == 1:
        return np.zeros(1)
    tree = np.asarray(basis.tree_edges)
    # unknowns theta[1:], theta[0] pinned to zero
    M = case.susceptance[tree, None] * case.incidence()[tree][:, 1:]
    theta = np.zeros(case.n)
    theta[1:] = np.linalg.lstsq(M, f, rcond=None)[0]
    edge_flows = basis.K @ f
    implied = case.susceptance * (theta[case.from_bus] - theta[case.to_bus])
    residual = np.max(np.abs(edge_flows - implied), initial=0.0)
    if residual > 1e-9 * (1.0 + np.max(np.abs(edge_flows), initial=0.0)):
        raise InconsistentFlows(f"angle residual {residual:.3e}")
    return theta
