"""KKT residuals, violation degrees and the training losses built on them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from ..activeset import solve_from_prices
from ..grid import FlowBasis, GridCase
from ..lp import DcopfSolution, flow_dual_difference, recover_flow_duals
from .network import IcnnModel, value_and_gradient


def dual_from_prices(mu, cost):
    """Generator bound multipliers implied by prices: ``(tau_lo, tau_hi)``.

    ``tau_hi = [mu - c]+`` and ``tau_lo = [mu - c]+ - (mu - c)``, so that
    ``c - tau_lo + tau_hi - mu = 0`` holds identically.
    """
    g = np.asarray(mu, dtype=float) - np.asarray(cost, dtype=float)
    tau_hi = np.maximum(g, 0.0)
    return tau_hi - g, tau_hi


def line_duals_from_prices(mu, case: GridCase, basis: FlowBasis, scale="dual"):
    """``(lam_lo, lam_hi)`` from the l1 line-dual recovery."""
    w = flow_dual_difference(recover_flow_duals(mu, basis, case.fmax, scale=scale), case.fmax)
    return np.maximum(-w, 0.0), np.maximum(w, 0.0)


@dataclass
class ViolationDegrees:
    lam_hi: np.ndarray
    lam_lo: np.ndarray
    tau_hi: np.ndarray
    tau_lo: np.ndarray
    balance: np.ndarray

    def terms(self):
        return (self.lam_hi, self.lam_lo, self.tau_hi, self.tau_lo, self.balance)

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(t), initial=0.0)) for t in self.terms())

    def is_zero(self, tol=1e-6) -> bool:
        return self.max_abs() <= tol

    def squared_norm(self) -> float:
        return float(sum(np.sum(t ** 2) for t in self.terms()))


def violation_degrees(case: GridCase, basis: FlowBasis, load, mu, x, f,
                      lam=None, scale="dual") -> ViolationDegrees:
    """Fixed-point residuals of the KKT system at ``(x, f)`` and prices ``mu``.

    Bound multipliers are derived from ``mu``; line multipliers come from
    ``lam = (lam_lo, lam_hi)`` when given, else from the l1 recovery.
    """
    mu = np.asarray(mu, dtype=float)
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    tau_lo, tau_hi = dual_from_prices(mu, case.cost)
    lam_lo, lam_hi = lam if lam is not None else line_duals_from_prices(mu, case, basis, scale)
    flows = basis.K @ f
    return ViolationDegrees(
        lam_hi=np.maximum(lam_hi + (flows - case.fmax), 0.0) - lam_hi,
        lam_lo=np.maximum(lam_lo - (flows + case.fmax), 0.0) - lam_lo,
        tau_hi=np.maximum(tau_hi + (x - case.xmax), 0.0) - tau_hi,
        tau_lo=np.maximum(tau_lo - x, 0.0) - tau_lo,
        balance=np.asarray(load, dtype=float) - x - basis.A_tilde @ f,
    )


def _stationarity(case, basis, mu, tau_lo, tau_hi, lam_lo, lam_hi):
    gen = case.cost - tau_lo + tau_hi - mu
    line = -basis.K.T @ lam_lo + basis.K.T @ lam_hi - basis.A_tilde.T @ mu
    return max(np.max(np.abs(gen), initial=0.0), np.max(np.abs(line), initial=0.0))


def fixed_point_holds(case, basis, load, x, f, mu, tau_lo, tau_hi, lam_lo, lam_hi, tol=1e-6) -> bool:
    """Fixed-point form: the four bracket equations plus stationarity and balance."""
    flows = basis.K @ f
    residuals = [
        np.maximum(lam_hi + (flows - case.fmax), 0.0) - lam_hi,
        np.maximum(lam_lo - (flows + case.fmax), 0.0) - lam_lo,
        np.maximum(tau_hi + (x - case.xmax), 0.0) - tau_hi,
        np.maximum(tau_lo - x, 0.0) - tau_lo,
        load - x - basis.A_tilde @ f,
    ]
    worst = max(float(np.max(np.abs(r), initial=0.0)) for r in residuals)
    return worst <= tol and _stationarity(case, basis, mu, tau_lo, tau_hi, lam_lo, lam_hi) <= tol


def kkt_holds(case, basis, load, x, f, mu, tau_lo, tau_hi, lam_lo, lam_hi, tol=1e-6) -> bool:
    """The KKT system checked term by term: stationarity, feasibility, slackness."""
    flows = basis.K @ f
    checks = [
        _stationarity(case, basis, mu, tau_lo, tau_hi, lam_lo, lam_hi),
        np.max(-x, initial=0.0), np.max(x - case.xmax, initial=0.0),
        np.max(np.abs(flows) - case.fmax, initial=0.0),
        np.max(np.abs(load - x - basis.A_tilde @ f), initial=0.0),
        max(np.max(-v, initial=0.0) for v in (tau_lo, tau_hi, lam_lo, lam_hi)),
        np.max(np.abs(tau_lo * x), initial=0.0),
        np.max(np.abs(tau_hi * (x - case.xmax)), initial=0.0),
        np.max(np.abs(lam_lo * (case.fmax + flows)), initial=0.0),
        np.max(np.abs(lam_hi * (flows - case.fmax)), initial=0.0),
    ]
    return max(float(c) for c in checks) <= tol


def kkt_fixed_point_check(case: GridCase, basis: FlowBasis, solution: DcopfSolution,
                          tol=1e-6, duals=None):
    """Check a primal/dual point both ways.

    ``duals`` overrides ``(mu, tau_lo, tau_hi, lam_lo, lam_hi)`` of the
    solution.  Returns ``(fixed_point_ok, kkt_ok)``; the two agree whenever
    the equivalence between the formulations holds.
    """
    d = duals if duals is not None else (solution.mu, solution.tau_lo, solution.tau_hi,
                                         solution.lam_lo, solution.lam_hi)
    args = (case, basis, solution.load, solution.x, solution.f, *d)
    return fixed_point_holds(*args, tol=tol), kkt_holds(*args, tol=tol)


def loss_regression(model: IcnnModel, load, J, mu, value_weight=1.0, price_weight=1.0):
    """Squared regression loss on cost and prices, summed over the batch.

    Returns ``(value, (dL/dJ_hat, dL/dmu_hat))``.
    """
    J_hat, mu_hat = value_and_gradient(model, np.atleast_2d(load))
    rJ = J_hat - np.atleast_1d(J)
    rmu = mu_hat - np.atleast_2d(mu)
    value = value_weight * np.sum(rJ ** 2) + price_weight * np.sum(rmu ** 2)
    return float(value), (2.0 * value_weight * rJ, 2.0 * price_weight * rmu)


@dataclass
class KktCandidates:
    """Stop-gradient primal candidates and line multipliers for a batch."""

    x: np.ndarray
    f: np.ndarray
    lam_lo: np.ndarray | None = None
    lam_hi: np.ndarray | None = None
    ascent_residual: np.ndarray | None = None


def augmented_residual(case: GridCase, basis: FlowBasis, load, mu, rho=1.0):
    """Balance residual at the minimizer of the augmented Lagrangian.

    Minimizes ``(c - mu) @ x - mu @ A_tilde f + rho/2 |load - x - A_tilde f|^2``
    over the generator boxes and line limits and returns
    ``load - x - A_tilde f``.  That residual is the gradient of the
    augmented dual function, which is concave and smooth in ``mu`` and
    maximized exactly by the optimal prices, where the residual vanishes.
    """
    load = np.asarray(load, dtype=float)
    mu = np.asarray(mu, dtype=float)
    n, nf = case.n, case.n - 1
    M = np.hstack([np.eye(n), basis.A_tilde])
    lin = np.concatenate([case.cost - mu, -basis.A_tilde.T @ mu])
    K = np.hstack([np.zeros((case.m, n)), basis.K])

    def fun(z):
        r = load - M @ z
        return lin @ z + 0.5 * rho * r @ r, lin - rho * (M.T @ r)

    z0 = np.concatenate([np.clip(load, 0.0, case.xmax), np.zeros(nf)])
    res = minimize(fun, z0, jac=True, method="SLSQP",
                   bounds=[(0.0, float(u)) for u in case.xmax] + [(None, None)] * nf,
                   constraints=[{"type": "ineq", "fun": lambda z: case.fmax - K @ z, "jac": lambda z: -K},
                                {"type": "ineq", "fun": lambda z: case.fmax + K @ z, "jac": lambda z: K}])
    return load - M @ res.x


def reconstruct_candidates(case, basis, loads, mu_hat, eps_act=1e-6, flow_eps=None,
                           scale="dual", line_terms=True) -> KktCandidates:
    """Primal candidates by running the price-based reconstruction on ``mu_hat``."""
    B = len(loads)
    xs = np.zeros((B, case.n))
    fs = np.zeros((B, case.n - 1))
    lam_lo = np.zeros((B, case.m)) if line_terms else None
    lam_hi = np.zeros((B, case.m)) if line_terms else None
    for i in range(B):
        x, f, _ = solve_from_prices(case, basis, loads[i], mu_hat[i], eps_act=eps_act,
                                    flow_eps=flow_eps, scale=scale)
        if x is not None:
            xs[i], fs[i] = x, f
        if line_terms:
            lam_lo[i], lam_hi[i] = line_duals_from_prices(mu_hat[i], case, basis, scale)
    return KktCandidates(xs, fs, lam_lo, lam_hi)


def kkt_value_and_grad(case: GridCase, basis: FlowBasis, loads, mu_hat, cand: KktCandidates,
                       price_weight=1.0, balance_weight=1.0, ascent_weight=0.0):
    """Sum of squared violation degrees and its derivative w.r.t. ``mu_hat``.

    Only the bound-multiplier terms depend on ``mu_hat``; the candidates and
    line multipliers are constants here.  A positive ``ascent_weight`` adds
    ``-ascent_weight * cand.ascent_residual`` to the price gradient (see
    :func:`augmented_residual`).  It does not change the reported value.
    """
    loads = np.atleast_2d(loads)
    mu_hat = np.atleast_2d(mu_hat)
    g = mu_hat - case.cost
    tau_hi = np.maximum(g, 0.0)
    tau_lo = tau_hi - g
    a_hi = tau_hi + (cand.x - case.xmax)
    a_lo = tau_lo - cand.x
    nu_tau_hi = np.maximum(a_hi, 0.0) - tau_hi
    nu_tau_lo = np.maximum(a_lo, 0.0) - tau_lo
    nu_p = loads - cand.x - cand.f @ basis.A_tilde.T
    value = price_weight * (np.sum(nu_tau_hi ** 2) + np.sum(nu_tau_lo ** 2))
    value += balance_weight * np.sum(nu_p ** 2)
    if cand.lam_hi is not None:
        flows = cand.f @ basis.K.T
        nu_lam_hi = np.maximum(cand.lam_hi + (flows - case.fmax), 0.0) - cand.lam_hi
        nu_lam_lo = np.maximum(cand.lam_lo - (flows + case.fmax), 0.0) - cand.lam_lo
        value += price_weight * (np.sum(nu_lam_hi ** 2) + np.sum(nu_lam_lo ** 2))
    d_hi = (a_hi > 0).astype(float) - 1.0
    d_lo = (a_lo > 0).astype(float) - 1.0
    grad = 2.0 * price_weight * (nu_tau_hi * d_hi * (g > 0) - nu_tau_lo * d_lo * (g < 0))
    if ascent_weight > 0 and cand.ascent_residual is not None:
        grad = grad - ascent_weight * cand.ascent_residual
    return float(value), grad


def loss_kkt(model: IcnnModel, case: GridCase, basis: FlowBasis, loads, x=None, f=None,
             price_weight=1.0, balance_weight=1.0, eps_act=1e-6, flow_eps=None,
             scale="dual", line_terms=True):
    """KKT-violation loss at the model's prices, summed over the batch.

    With ``x`` and ``f`` given (labeled data) they are the primal candidates;
    otherwise candidates come from the price-based reconstruction.  Returns
    ``(value, (dL/dJ_hat, dL/dmu_hat))``; ``dL/dJ_hat`` is zero.
    """
    loads = np.atleast_2d(np.asarray(loads, dtype=float))
    if len(loads) == 0:
        return 0.0, (np.zeros(0), np.zeros((0, model.input_dim)))
    _, mu_hat = value_and_gradient(model, loads)
    if x is None:
        cand = reconstruct_candidates(case, basis, loads, mu_hat, eps_act, flow_eps, scale, line_terms)
    else:
        cand = KktCandidates(np.atleast_2d(x), np.atleast_2d(f).reshape(len(loads), -1))
        if line_terms:
            pairs = [line_duals_from_prices(m, case, basis, scale) for m in mu_hat]
            cand.lam_lo = np.array([p[0] for p in pairs])
            cand.lam_hi = np.array([p[1] for p in pairs])
    value, grad = kkt_value_and_grad(case, basis, loads, mu_hat, cand, price_weight, balance_weight)
    return value, (np.zeros(len(loads)), grad)
