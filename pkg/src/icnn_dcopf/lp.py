"""Dense revised simplex, the DCOPF primal/dual solve and small LP oracles.

Everything here is deliberately self-contained: the simplex gives exact
access to the optimal basis and its duals, which the rest of the package
treats as ground truth.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InfeasibleError, IterationLimit, TooLarge, UnboundedError
from .grid import FlowBasis, GridCase


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    DEGENERATE = "Degenerate"


@dataclass
class SolverConfig:
    feasibility_tol: float = 1e-9
    optimality_tol: float = 1e-9
    pivot_tol: float = 1e-9
    max_iter: int | None = None  # default 50 * (rows + cols)
    refactor_every: int = 40


@dataclass
class LpProblem:
    """``min c @ x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lo <= x <= hi``.

    Missing blocks are empty; ``lo`` defaults to 0 and ``hi`` to +inf.  Use
    ``-np.inf`` / ``np.inf`` for free directions.
    """

    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        nvar = self.c.size
        self.A_eq, self.b_eq = _block(self.A_eq, self.b_eq, nvar, "eq")
        self.A_ub, self.b_ub = _block(self.A_ub, self.b_ub, nvar, "ub")
        self.lo = np.zeros(nvar) if self.lo is None else np.asarray(self.lo, dtype=float).ravel()
        self.hi = np.full(nvar, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).ravel()
        if self.lo.shape != (nvar,) or self.hi.shape != (nvar,):
            raise ValueError("bounds must match the number of variables")
        if np.any(self.lo > self.hi):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(self.lo == np.inf) or np.any(self.hi == -np.inf):
            raise ValueError("invalid infinite bound")
        for arr in (self.c, self.A_eq, self.b_eq, self.A_ub, self.b_ub):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP data must be finite")

    @property
    def num_vars(self) -> int:
        return self.c.size


def _block(A, b, nvar, name):
    if A is None:
        return np.zeros((0, nvar)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[1] != nvar or A.shape[0] != b.size:
        raise ValueError(f"{name} block has inconsistent dimensions")
    return A, b


@dataclass
class LpResult:
    """Outcome of :func:`solve_lp`.

    ``eq_duals`` and ``ub_duals`` are sensitivities of the optimal value to
    the right-hand sides (so ``ub_duals <= 0``); ``reduced_costs`` are
    ``c - A_eq.T @ eq_duals - A_ub.T @ ub_duals`` and act as bound multipliers.
    """

    status: Status
    x: np.ndarray | None = None
    objective: float = math.nan
    eq_duals: np.ndarray | None = None
    ub_duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    degenerate: bool = False

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _StandardForm:
    """``min ct @ y  s.t.  A y = b, y >= 0`` with the affine map back to x."""

    def __init__(self, p: LpProblem):
        nvar = p.num_vars
        x0 = np.zeros(nvar)
        cols = []       # (orig var, coefficient) for each structural column
        bound_rows = []
        for j in range(nvar):
            lo, hi = p.lo[j], p.hi[j]
            if np.isfinite(lo):
                x0[j] = lo
                cols.append((j, 1.0))
                if np.isfinite(hi):
                    bound_rows.append((len(cols) - 1, hi - lo))
            elif np.isfinite(hi):
                x0[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        nstruct = len(cols)
        T = np.zeros((nvar, nstruct))
        for k, (j, s) in enumerate(cols):
            T[j, k] = s
        n_eq, n_ub, n_bd = p.A_eq.shape[0], p.A_ub.shape[0], len(bound_rows)
        nrows = n_eq + n_ub + n_bd
        ncols = nstruct + n_ub + n_bd
        A = np.zeros((nrows, ncols))
        b = np.zeros(nrows)
        A[:n_eq, :nstruct] = p.A_eq @ T
        b[:n_eq] = p.b_eq - p.A_eq @ x0
        A[n_eq:n_eq + n_ub, :nstruct] = p.A_ub @ T
        A[n_eq:n_eq + n_ub, nstruct:nstruct + n_ub] = np.eye(n_ub)
        b[n_eq:n_eq + n_ub] = p.b_ub - p.A_ub @ x0
        slack_of_row = {n_eq + i: nstruct + i for i in range(n_ub)}
        for r, (k, width) in enumerate(bound_rows):
            row = n_eq + n_ub + r
            A[row, k] = 1.0
            A[row, nstruct + n_ub + r] = 1.0
            b[row] = width
            slack_of_row[row] = nstruct + n_ub + r
        self.sign = np.where(b < 0, -1.0, 1.0)
        self.A = A * self.sign[:, None]
        self.b = b * self.sign
        self.ct = np.zeros(ncols)
        self.ct[:nstruct] = T.T @ p.c
        self.T, self.x0 = T, x0
        self.nstruct = nstruct
        self.n_eq, self.n_ub = n_eq, n_ub
        # rows whose slack can start in the basis
        self.slack_of_row = {r: s for r, s in slack_of_row.items() if self.sign[r] > 0}

    def to_x(self, y):
        return self.x0 + self.T @ y[:self.nstruct]


class _Simplex:
    """Revised simplex with an explicit basis inverse and Bland's rule."""

    def __init__(self, A, b, cfg: SolverConfig):
        self.A, self.b, self.cfg = A, b, cfg
        self.iterations = 0

    def refactor(self):
        self.Binv = np.linalg.inv(self.A[:, self.basis])
        self.since_refactor = 0

    def run(self, cost, allowed, limit):
        """Optimise ``cost`` over the current basis; returns 'optimal' or 'unbounded'."""
        cfg = self.cfg
        scale = 1.0 + np.max(np.abs(cost), initial=0.0)
        opt_tol = cfg.optimality_tol * scale
        self.refactor()
        nonbasic = np.ones(self.A.shape[1], dtype=bool)
        nonbasic[self.basis] = False
        while True:
            if self.iterations >= limit:
                raise IterationLimit(f"simplex exceeded {limit} pivots")
            if self.since_refactor >= cfg.refactor_every:
                self.refactor()
            y = cost[self.basis] @ self.Binv
            d = cost - y @ self.A
            candidates = np.flatnonzero(nonbasic & allowed & (d < -opt_tol))
            if candidates.size == 0:
                return "optimal"
            q = candidates[0]
            u = self.Binv @ self.A[:, q]
            xB = self.Binv @ self.b
            rows = np.flatnonzero(u > cfg.pivot_tol * (1.0 + np.max(np.abs(u), initial=0.0)))
            if rows.size == 0:
                return "unbounded"
            xB_rows = np.maximum(xB[rows], 0.0)
            ratios = xB_rows / u[rows]
            best = ratios.min()
            ties = rows[ratios <= best + cfg.feasibility_tol * (1.0 + best)]
            basis_arr = np.asarray(self.basis)
            r = ties[np.argmin(basis_arr[ties])]
            self.pivot(r, q, u)
            nonbasic[q] = False
            nonbasic[basis_arr[r]] = True

    def pivot(self, r, q, u):
        self.basis[r] = q
        pr = u[r]
        Binv = self.Binv
        row = Binv[r] / pr
        Binv -= np.outer(u, row)
        Binv[r] = row
        self.iterations += 1
        self.since_refactor += 1


def solve_lp(problem: LpProblem, config: SolverConfig | None = None) -> LpResult:
    """Two-phase revised simplex with Bland's anti-cycling rule.

    Never raises on infeasible or unbounded problems; inspect ``status``.
    Raises :class:`IterationLimit` when the pivot budget is exhausted.
    """
    cfg = config or SolverConfig()
    sf = _StandardForm(problem)
    A, b = sf.A, sf.b
    nrows, ncols = A.shape
    limit = cfg.max_iter or 50 * (nrows + ncols)

    # phase 1: slack columns where possible, artificials elsewhere
    art_rows = [r for r in range(nrows) if r not in sf.slack_of_row]
    n_art = len(art_rows)
    A1 = np.hstack([A, np.zeros((nrows, n_art))])
    for k, r in enumerate(art_rows):
        A1[r, ncols + k] = 1.0
    basis = [sf.slack_of_row.get(r, -1) for r in range(nrows)]
    for k, r in enumerate(art_rows):
        basis[r] = ncols + k
    sx = _Simplex(A1, b, cfg)
    sx.basis = basis
    if n_art:
        cost1 = np.zeros(ncols + n_art)
        cost1[ncols:] = 1.0
        sx.run(cost1, np.ones(ncols + n_art, dtype=bool), limit)
        sx.refactor()
        xB = sx.Binv @ b
        art_value = sum(xB[i] for i, j in enumerate(sx.basis) if j >= ncols)
        if art_value > cfg.feasibility_tol * (1.0 + np.max(np.abs(b), initial=0.0)):
            return LpResult(Status.INFEASIBLE, iterations=sx.iterations)
        _drive_out_artificials(sx, ncols, cfg)

    keep = [r for r in range(nrows) if sx.basis[r] < ncols]
    A2 = A[keep]
    b2 = b[keep]
    sx2 = _Simplex(A2, b2, cfg)
    sx2.basis = [sx.basis[r] for r in keep]
    sx2.iterations = sx.iterations
    outcome = sx2.run(sf.ct, np.ones(ncols, dtype=bool), limit)
    if outcome == "unbounded":
        return LpResult(Status.UNBOUNDED, iterations=sx2.iterations)
    sx2.refactor()
    yB = np.linalg.solve(A2[:, sx2.basis], b2)
    y = np.zeros(ncols)
    y[sx2.basis] = np.maximum(yB, 0.0)
    duals_kept = np.linalg.solve(A2[:, sx2.basis].T, sf.ct[sx2.basis])
    duals = np.zeros(nrows)
    duals[keep] = duals_kept
    duals *= sf.sign
    x = sf.to_x(y)
    eq_duals = duals[:sf.n_eq]
    ub_duals = duals[sf.n_eq:sf.n_eq + sf.n_ub]
    reduced = problem.c - problem.A_eq.T @ eq_duals - problem.A_ub.T @ ub_duals
    degenerate = bool(np.any(np.abs(yB) <= cfg.feasibility_tol * (1.0 + np.max(np.abs(b2), initial=0.0))))
    return LpResult(Status.OPTIMAL, x=x, objective=float(problem.c @ x),
                    eq_duals=eq_duals, ub_duals=ub_duals, reduced_costs=reduced,
                    iterations=sx2.iterations, degenerate=degenerate)


def _drive_out_artificials(sx: _Simplex, ncols, cfg):
    """Pivot zero-valued artificials out of the basis where a real column allows it."""
    for r in range(len(sx.basis)):
        if sx.basis[r] < ncols:
            continue
        row = sx.Binv[r] @ sx.A[:, :ncols]
        in_basis = np.zeros(ncols, dtype=bool)
        in_basis[[j for j in sx.basis if j < ncols]] = True
        row[in_basis] = 0.0
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) > 1e-9:
            u = sx.Binv @ sx.A[:, j]
            sx.pivot(r, j, u)
        # otherwise the row is redundant and gets dropped by the caller


def enumerate_vertices(problem: LpProblem, tol: float = 1e-9, max_vars: int = 12):
    """All basic feasible solutions of ``problem`` in the original variables.

    Brute force over choices of active inequalities; meant only as an
    independent oracle for small problems.
    """
    nvar = problem.num_vars
    if nvar > max_vars:
        raise TooLarge(f"{nvar} variables exceeds the enumeration guard of {max_vars}")
    G = [problem.A_ub]
    h = [problem.b_ub]
    for j in range(nvar):
        if np.isfinite(problem.hi[j]):
            G.append(np.eye(nvar)[j][None])
            h.append([problem.hi[j]])
        if np.isfinite(problem.lo[j]):
            G.append(-np.eye(nvar)[j][None])
            h.append([-problem.lo[j]])
    G = np.vstack(G)
    h = np.concatenate([np.asarray(v, dtype=float) for v in h])
    A_eq, b_eq = problem.A_eq, problem.b_eq
    rank_eq = np.linalg.matrix_rank(A_eq) if A_eq.size else 0
    need = nvar - rank_eq
    if need > G.shape[0]:
        return []
    scale = 1.0 + max(np.max(np.abs(h), initial=0.0), np.max(np.abs(b_eq), initial=0.0))
    vertices = []
    seen = set()

    def keep(x):
        if np.any(G @ x > h + tol * scale):
            return
        key = tuple(np.round(x / (tol * scale * 100)).astype(np.int64))
        if key not in seen:
            seen.add(key)
            vertices.append(x)

    subsets = itertools.combinations(range(G.shape[0]), need)
    if rank_eq == A_eq.shape[0] and need > 0:
        # square systems in batches; near-singular ones fail the Hadamard-normalized determinant
        while True:
            chunk = np.array(list(itertools.islice(subsets, 4096)), dtype=int)
            if not len(chunk):
                break
            M = np.concatenate([np.broadcast_to(A_eq, (len(chunk),) + A_eq.shape), G[chunk]], axis=1)
            rhs = np.concatenate([np.broadcast_to(b_eq, (len(chunk), len(b_eq))), h[chunk]], axis=1)
            sign, logdet = np.linalg.slogdet(M)
            bound = np.sum(np.log(np.linalg.norm(M, axis=2)), axis=1)
            ok = (sign != 0) & (logdet - bound > np.log(1e-12))
            if not np.any(ok):
                continue
            X = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
            res = np.max(np.abs(np.einsum("kij,kj->ki", M[ok], X) - rhs[ok]), axis=1)
            X = X[res <= tol * scale]
            X = X[np.all(X @ G.T <= h + tol * scale, axis=1)]
            for x in X:
                keep(x)
        return vertices
    for subset in subsets:
        M = np.vstack([A_eq, G[list(subset)]])
        rhs = np.concatenate([b_eq, h[list(subset)]])
        if np.linalg.matrix_rank(M) < nvar:
            continue
        x = np.linalg.lstsq(M, rhs, rcond=None)[0]
        if np.max(np.abs(M @ x - rhs), initial=0.0) <= tol * scale:
            keep(x)
    return vertices


def vertex_optimum(problem: LpProblem, **kwargs):
    """Best objective over :func:`enumerate_vertices`, or ``None`` if there are none."""
    vertices = enumerate_vertices(problem, **kwargs)
    if not vertices:
        return None
    return min(float(problem.c @ v) for v in vertices)


@dataclass
class DcopfSolution:
    """Primal and dual solution of one DCOPF instance.

    ``mu`` are the nodal prices (duals of the balance rows); ``tau_lo`` and
    ``tau_hi`` are the generator bound multipliers, ``lam_lo`` and ``lam_hi``
    the line limit multipliers, all nonnegative.
    """

    status: Status
    load: np.ndarray
    x: np.ndarray | None = None
    f: np.ndarray | None = None
    J: float = math.nan
    mu: np.ndarray | None = None
    tau_lo: np.ndarray | None = None
    tau_hi: np.ndarray | None = None
    lam_lo: np.ndarray | None = None
    lam_hi: np.ndarray | None = None
    iterations: int = 0

    @property
    def feasible(self) -> bool:
        return self.status is not Status.INFEASIBLE

    @property
    def degenerate(self) -> bool:
        return self.status is Status.DEGENERATE


def dcopf_problem(case: GridCase, basis: FlowBasis, load) -> LpProblem:
    """The DCOPF as an :class:`LpProblem` over ``[x, f]``."""
    n, m = case.n, case.m
    load = np.asarray(load, dtype=float)
    if load.shape != (n,):
        raise ValueError(f"load must have length {n}")
    zeros = np.zeros((m, n))
    return LpProblem(
        c=np.concatenate([case.cost, np.zeros(n - 1)]),
        A_eq=np.hstack([np.eye(n), basis.A_tilde]),
        b_eq=load,
        A_ub=np.vstack([np.hstack([zeros, basis.K]), np.hstack([zeros, -basis.K])]),
        b_ub=np.concatenate([case.fmax, case.fmax]),
        lo=np.concatenate([np.zeros(n), np.full(n - 1, -np.inf)]),
        hi=np.concatenate([case.xmax, np.full(n - 1, np.inf)]),
    )


def solve_dcopf(case: GridCase, basis: FlowBasis, load, config: SolverConfig | None = None,
                raise_infeasible: bool = False) -> DcopfSolution:
    """Solve the DCOPF at ``load`` and return the full primal/dual solution.

    The status is ``Degenerate`` when the optimal vertex is not pinned down by
    exactly ``n - 1`` strictly complementary active inequalities; prices are
    then one valid subgradient, not necessarily the gradient.
    """
    cfg = config or SolverConfig()
    load = np.asarray(load, dtype=float)
    res = solve_lp(dcopf_problem(case, basis, load), cfg)
    if res.status is Status.INFEASIBLE:
        if raise_infeasible:
            raise InfeasibleError(f"load {load} cannot be served")
        return DcopfSolution(Status.INFEASIBLE, load=load, iterations=res.iterations)
    if res.status is Status.UNBOUNDED:  # impossible for valid cases
        raise UnboundedError("DCOPF reported unbounded")
    n, m = case.n, case.m
    x = np.clip(res.x[:n], 0.0, case.xmax)
    f = res.x[n:]
    mu = res.eq_duals.copy()
    r = res.reduced_costs[:n]
    sol = DcopfSolution(
        Status.OPTIMAL, load=load, x=x, f=f, J=float(case.cost @ x), mu=mu,
        tau_lo=np.maximum(r, 0.0), tau_hi=np.maximum(-r, 0.0),
        lam_hi=np.maximum(-res.ub_duals[:m], 0.0), lam_lo=np.maximum(-res.ub_duals[m:], 0.0),
        iterations=res.iterations)
    if _is_degenerate(case, basis, sol, cfg):
        sol.status = Status.DEGENERATE
    return sol


def _is_degenerate(case, basis, sol, cfg) -> bool:
    primal_tol = 1e-9 * (1.0 + np.max(np.abs(sol.load), initial=0.0) + np.max(case.xmax, initial=0.0))
    dual_tol = 1e-9 * (1.0 + np.max(case.cost))
    active = 0
    for i in range(case.n):
        if case.xmax[i] <= primal_tol:
            active += 1
            continue
        at_bound = sol.x[i] <= primal_tol or sol.x[i] >= case.xmax[i] - primal_tol
        if at_bound:
            active += 1
            if abs(sol.mu[i] - case.cost[i]) <= dual_tol:
                return True
    flows = basis.K @ sol.f
    w = sol.lam_hi - sol.lam_lo
    for e in range(case.m):
        if case.fmax[e] <= primal_tol:
            active += 1
            continue
        if abs(flows[e]) >= case.fmax[e] - primal_tol:
            active += 1
            if abs(w[e]) <= dual_tol:
                return True
    return active != case.n - 1


def cost_curve(case, basis, load0, direction, steps, t_max=1.0, config=None):
    """Sample ``J*(load0 + t * direction)`` for ``t`` in ``linspace(0, t_max, steps)``.

    Infeasible points are returned with ``J = None``.
    """
    load0 = np.asarray(load0, dtype=float)
    direction = np.asarray(direction, dtype=float)
    out = []
    for t in np.linspace(0.0, t_max, steps):
        sol = solve_dcopf(case, basis, load0 + t * direction, config)
        out.append((float(t), sol.J if sol.feasible else None))
    return out


def curve_slopes(curve):
    """Finite-difference slopes between consecutive feasible samples."""
    pts = [(t, J) for t, J in curve if J is not None]
    return [(J1 - J0) / (t1 - t0) for (t0, J0), (t1, J1) in zip(pts, pts[1:])]


def recover_flow_duals(mu, basis: FlowBasis, fmax, scale: str = "dual",
                       config: SolverConfig | None = None) -> np.ndarray:
    """Line multipliers from nodal prices by least-weighted-l1 recovery.

    Returns ``nu`` with ``lam_hi - lam_lo = nu / fmax`` line by line.

    ``scale="dual"`` solves ``min sum |nu|  s.t.  K.T @ (nu / fmax) = A_tilde.T @ mu``,
    whose solution is the dual-optimal line multiplier set for ``mu``.
    ``scale="limit"`` uses ``K.T @ diag(fmax) @ nu`` in the constraint instead;
    it agrees on signs for radial networks but not on magnitudes.
    Lines with ``fmax == 0`` get ``nu = 0``.
    """
    mu = np.asarray(mu, dtype=float)
    fmax = np.asarray(fmax, dtype=float)
    if mu.shape != (basis.n,):
        raise ValueError(f"mu must have length {basis.n}")
    m = basis.m
    rhs = basis.A_tilde.T @ mu
    live = fmax > 0
    if scale == "dual":
        # variables w = lam_hi - lam_lo on every line, cost fmax * |w|
        Kt = basis.K.T
        weights = fmax
    elif scale == "limit":
        Kt = basis.K.T[:, live] * fmax[live]
        weights = np.ones(int(live.sum()))
    else:
        raise ValueError(f"unknown scale {scale!r}")
    k = Kt.shape[1]
    problem = LpProblem(c=np.concatenate([weights, weights]),
                        A_eq=np.hstack([Kt, -Kt]), b_eq=rhs)
    res = solve_lp(problem, config)
    if not res.optimal:
        raise InfeasibleError("prices are inconsistent with the flow basis")
    sol = res.x[:k] - res.x[k:]
    nu = np.zeros(m)
    if scale == "dual":
        nu = fmax * sol
    else:
        nu[live] = sol
    return nu


def flow_dual_difference(nu, fmax) -> np.ndarray:
    """``lam_hi - lam_lo`` from recovered ``nu``; zero on lines without capacity."""
    nu = np.asarray(nu, dtype=float)
    fmax = np.asarray(fmax, dtype=float)
    out = np.zeros_like(nu)
    live = fmax > 0
    out[live] = nu[live] / fmax[live]
    return out
