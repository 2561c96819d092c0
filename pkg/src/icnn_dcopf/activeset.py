"""Dispatch reconstruction from nodal prices.

Prices tell which generator and line limits bind; with those fixed, the
remaining unknowns follow from the nodal balance as one linear solve.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DcopfError, NoSolution
from .grid import FlowBasis, GridCase
from .lp import SolverConfig, flow_dual_difference, recover_flow_duals


class GenStatus(str, enum.Enum):
    AT_ZERO = "AtZero"
    AT_UPPER = "AtUpper"
    FREE = "Free"


class LineStatus(str, enum.Enum):
    AT_NEG = "AtNeg"
    AT_POS = "AtPos"
    FREE = "Free"


@dataclass(frozen=True)
class ActiveSet:
    gen_status: tuple
    line_status: tuple

    def key(self):
        return (tuple(s.value for s in self.gen_status),
                tuple(s.value for s in self.line_status))


@dataclass
class Diagnostics:
    n_unknowns: int = 0
    n_equations: int = 0
    square: bool = False
    rank_deficient: bool = False
    condition: float = np.inf
    residual: float = np.inf
    consistent: bool = False
    feasible: bool = False
    max_violation: float = np.inf
    failed_stage: str | None = None
    message: str = ""
    active: ActiveSet | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                for k, v in self.__dict__.items() if k != "active"}


def detect_gen_active(mu, cost, eps_act: float = 1e-6):
    """Generator status from the sign of ``mu - c``, with a dead band ``eps_act``."""
    gap = np.asarray(mu, dtype=float) - np.asarray(cost, dtype=float)
    return tuple(GenStatus.AT_ZERO if g < -eps_act else
                 GenStatus.AT_UPPER if g > eps_act else GenStatus.FREE for g in gap)


def detect_flow_active(nu, fmax, eps_act: float = 1e-6):
    """Line status from ``lam_hi - lam_lo = nu / fmax``.

    Lines with zero rating can only carry zero flow; they are reported as
    ``AtPos`` with limit 0.
    """
    fmax = np.asarray(fmax, dtype=float)
    w = flow_dual_difference(nu, fmax)
    out = []
    for we, cap in zip(w, fmax):
        if cap <= 0:
            out.append(LineStatus.AT_POS)
        elif we > eps_act:
            out.append(LineStatus.AT_POS)
        elif we < -eps_act:
            out.append(LineStatus.AT_NEG)
        else:
            out.append(LineStatus.FREE)
    return tuple(out)


def assemble_and_solve(case: GridCase, basis: FlowBasis, load, active: ActiveSet,
                       cond_limit: float = 1e10, slack_tol: float = 1e-6,
                       residual_tol: float = 1e-6):
    """Solve ``x + A_tilde f = load`` with the binding limits of ``active`` fixed.

    Returns ``(x, f, diagnostics)``.  A square, well-conditioned system is
    solved directly; anything else falls back to minimum-norm least squares
    with ``diagnostics.rank_deficient`` set.  Raises :class:`NoSolution`
    (carrying the diagnostics and the least-squares point) when the
    equations cannot be met.
    """
    load = np.asarray(load, dtype=float)
    n, m = case.n, case.m
    x_fixed = np.zeros(n)
    free = []
    for i, s in enumerate(active.gen_status):
        if case.xmax[i] <= 0:
            continue
        if s is GenStatus.AT_UPPER:
            x_fixed[i] = case.xmax[i]
        elif s is GenStatus.FREE:
            free.append(i)
    line_rows, line_rhs = [], []
    for e, s in enumerate(active.line_status):
        if s is LineStatus.AT_POS:
            line_rows.append(basis.K[e])
            line_rhs.append(case.fmax[e])
        elif s is LineStatus.AT_NEG:
            line_rows.append(basis.K[e])
            line_rhs.append(-case.fmax[e])

    nf = len(free)
    n_unknowns = nf + n - 1
    top = np.zeros((n, n_unknowns))
    top[free, np.arange(nf)] = 1.0
    top[:, nf:] = basis.A_tilde
    rows = [top]
    rhs = [load - x_fixed]
    if line_rows:
        bottom = np.zeros((len(line_rows), n_unknowns))
        bottom[:, nf:] = np.array(line_rows)
        rows.append(bottom)
        rhs.append(np.array(line_rhs))
    M = np.vstack(rows)
    r = np.concatenate(rhs)

    diag = Diagnostics(n_unknowns=n_unknowns, n_equations=M.shape[0], active=active)
    diag.square = M.shape[0] == n_unknowns
    diag.condition = float(np.linalg.cond(M)) if M.size else 1.0
    if diag.square and diag.condition < cond_limit:
        z = np.linalg.solve(M, r)
    else:
        z = np.linalg.lstsq(M, r, rcond=None)[0]
        diag.rank_deficient = True
    diag.residual = float(np.max(np.abs(M @ z - r), initial=0.0))

    x = x_fixed.copy()
    x[free] = z[:nf]
    f = z[nf:]
    scale = 1.0 + np.max(np.abs(load), initial=0.0)
    flows = basis.K @ f
    violation = max(
        np.max(-x, initial=0.0),
        np.max(x - case.xmax, initial=0.0),
        np.max(np.abs(flows) - case.fmax, initial=0.0),
        np.max(np.abs(load - x - basis.A_tilde @ f), initial=0.0),
    )
    diag.max_violation = float(violation)
    diag.consistent = diag.residual <= residual_tol * scale
    diag.feasible = diag.consistent and violation <= slack_tol * scale
    if not diag.consistent:
        diag.failed_stage = "assemble"
        diag.message = f"least-squares residual {diag.residual:.3e}"
        err = NoSolution(f"active set is inconsistent with the load ({diag.message})", diag)
        err.x, err.f = x, f
        raise err
    return x, f, diag


def solve_from_prices(case: GridCase, basis: FlowBasis, load, mu, eps_act: float = 1e-6,
                      flow_eps: float | None = None, scale: str = "dual",
                      config: SolverConfig | None = None):
    """Full reconstruction path: line duals, active detection, linear solve.

    Never raises for bad prices; failures are reported through
    ``diagnostics.failed_stage`` and ``diagnostics.feasible``.
    """
    flow_eps = eps_act if flow_eps is None else flow_eps
    try:
        nu = recover_flow_duals(mu, basis, case.fmax, scale=scale, config=config)
    except DcopfError as exc:
        diag = Diagnostics(failed_stage="flow_duals", message=str(exc))
        return None, None, diag
    active = ActiveSet(detect_gen_active(mu, case.cost, eps_act),
                       detect_flow_active(nu, case.fmax, flow_eps))
    try:
        return assemble_and_solve(case, basis, load, active)
    except NoSolution as exc:
        return exc.x, exc.f, exc.diagnostics


def active_set_from_solution(case: GridCase, basis: FlowBasis, x, f, tol: float = 1e-7) -> ActiveSet:
    """Primal activity of an LP solution, for cross-checks."""
    scale = 1.0 + np.max(case.xmax, initial=0.0)
    gens = []
    for xi, cap in zip(x, case.xmax):
        if xi <= tol * scale:
            gens.append(GenStatus.AT_ZERO)
        elif xi >= cap - tol * scale:
            gens.append(GenStatus.AT_UPPER)
        else:
            gens.append(GenStatus.FREE)
    lines = []
    for flow, cap in zip(basis.K @ f, case.fmax):
        if flow >= cap - tol * scale:
            lines.append(LineStatus.AT_POS)
        elif flow <= -cap + tol * scale:
            lines.append(LineStatus.AT_NEG)
        else:
            lines.append(LineStatus.FREE)
    return ActiveSet(tuple(gens), tuple(lines))
