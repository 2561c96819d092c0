"""Empirical checks of the generalization guarantees for convex cost models.

Two facts about a convex, differentiable ``g`` drive everything here:

* if ``g`` has the same gradient ``mu`` at points ``l^1..l^N``, it is affine
  with slope ``mu`` on their convex hull;
* gradient monotonicity, ``(grad g(l^i) - grad g(l)) @ (l^i - l) >= 0``, boxes
  the gradient at any hull point into a polytope built from the ``l^i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activeset import ActiveSet, detect_gen_active
from .datasets import Dataset
from .exceptions import DegenerateSpan, PreconditionFailed
from .lp import LpProblem, Status, solve_lp
from .icnn.network import IcnnModel, forward, value_and_gradient


def hull_membership(points, l_new, tol=1e-8):
    """Whether ``l_new`` is a convex combination of ``points`` (rows).

    Returns ``(inside, alpha)``; ``alpha`` is ``None`` when outside.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    l_new = np.asarray(l_new, dtype=float).ravel()
    if P.shape[0] == 0:
        raise ValueError("need at least one point")
    if P.shape[1] != l_new.size:
        raise ValueError("point dimensions differ")
    span = 1.0 + np.max(np.abs(P), initial=0.0)
    if np.any(l_new < P.min(axis=0) - tol * span) or np.any(l_new > P.max(axis=0) + tol * span):
        return False, None
    N = P.shape[0]
    problem = LpProblem(c=np.zeros(N), A_eq=np.vstack([P.T, np.ones((1, N))]),
                        b_eq=np.concatenate([l_new, [1.0]]))
    res = solve_lp(problem)
    if not res.optimal:
        return False, None
    alpha = np.clip(res.x, 0.0, None)
    alpha /= alpha.sum()
    if np.max(np.abs(alpha @ P - l_new)) > tol * span:
        return False, None
    return True, alpha


def training_loss(model: IcnnModel, data: Dataset) -> float:
    """Unweighted regression loss summed over ``data``."""
    if len(data) == 0:
        return 0.0
    J_hat, mu_hat = value_and_gradient(model, data.load)
    return float(np.sum((J_hat - data.J) ** 2) + np.sum((mu_hat - data.mu) ** 2))


def well_trained_check(model: IcnnModel, data: Dataset, tol=None) -> bool:
    """Training loss below ``tol`` (default ``1e-6`` per sample)."""
    tol = 1e-6 * len(data) if tol is None else tol
    return len(data) == 0 or training_loss(model, data) < tol


@dataclass
class RegionFingerprint:
    mu: tuple
    indices: list
    active: ActiveSet | None = None

    def to_dict(self) -> dict:
        out = {"mu": list(self.mu), "indices": list(self.indices), "size": len(self.indices)}
        if self.active is not None:
            out["gen_status"] = [s.value for s in self.active.gen_status]
        return out


def _round(mu, resolution):
    return tuple(float(v) for v in np.round(np.asarray(mu) / resolution) * resolution + 0.0)


def fingerprint_regions(data: Dataset, resolution=1e-6, cost=None):
    """Group samples by their prices rounded to ``resolution``.

    Regions are ordered by their first sample.  With ``cost`` given, the
    generator part of the active set is attached.
    """
    groups = {}
    for i in range(len(data)):
        groups.setdefault(_round(data.mu[i], resolution), []).append(i)
    out = []
    for key, idx in groups.items():
        active = None
        if cost is not None:
            active = ActiveSet(detect_gen_active(np.array(key), cost), ())
        out.append(RegionFingerprint(mu=key, indices=idx, active=active))
    return out


@dataclass
class SameRegionReport:
    mu: np.ndarray
    training_loss: float
    n_trials: int
    max_gradient_deviation: float
    max_linearity_error: float
    tol_grad: float
    tol_linear: float

    @property
    def passed(self) -> bool:
        return (self.max_gradient_deviation <= self.tol_grad
                and self.max_linearity_error <= self.tol_linear)

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "training_loss": self.training_loss,
                "n_trials": self.n_trials, "max_gradient_deviation": self.max_gradient_deviation,
                "max_linearity_error": self.max_linearity_error, "tol_grad": self.tol_grad,
                "tol_linear": self.tol_linear, "passed": self.passed}


def same_region_check(model: IcnnModel, region: Dataset, trials, tol_grad=1e-3,
                      tol_linear=None, resolution=1e-6, well_trained_tol=None) -> SameRegionReport:
    """Gradient constancy and linearity of ``model`` on the hull of one region.

    Raises :class:`PreconditionFailed` when the samples span several price
    regions, the model is not well trained on them, or a trial point lies
    outside their hull.
    """
    if len(region) == 0:
        raise PreconditionFailed("empty region")
    if len(fingerprint_regions(region, resolution)) != 1:
        raise PreconditionFailed("samples come from more than one price region")
    loss = training_loss(model, region)
    if not well_trained_check(model, region, well_trained_tol):
        raise PreconditionFailed(f"model is not well trained (loss {loss:.3e})")
    trials = np.atleast_2d(np.asarray(trials, dtype=float))
    J_train = forward(model, region.load)
    mu = region.mu[0]
    if tol_linear is None:
        tol_linear = tol_grad * (1.0 + np.max(np.abs(region.load), initial=0.0))
    dev = lin = 0.0
    for t in trials:
        inside, alpha = hull_membership(region.load, t)
        if not inside:
            raise PreconditionFailed(f"trial point {t.tolist()} is outside the hull")
        J_t, g = value_and_gradient(model, t)
        dev = max(dev, float(np.max(np.abs(g - mu))))
        lin = max(lin, abs(J_t - float(alpha @ J_train)))
    return SameRegionReport(mu=np.asarray(mu), training_loss=loss, n_trials=len(trials),
                            max_gradient_deviation=dev, max_linearity_error=lin,
                            tol_grad=tol_grad, tol_linear=float(tol_linear))


@dataclass
class GradientPolytope:
    """``{mu : A @ mu <= b}`` bounding the gradient at ``l_new``.

    Row ``i`` is ``(l^i - l_new) @ mu <= (l^i - l_new) @ mu^i``.
    """

    A: np.ndarray
    b: np.ndarray
    l_new: np.ndarray
    _bounds: tuple | None = field(default=None, repr=False)

    def contains(self, mu, slack=1e-6) -> bool:
        scale = 1.0 + np.abs(self.b)
        return bool(np.all(self.A @ np.asarray(mu, dtype=float) - self.b <= slack * scale))

    def bounds(self):
        """Per-coordinate ``(lo, hi)`` over the polytope by LP; ``inf`` when unbounded."""
        if self._bounds is None:
            d = self.A.shape[1]
            lo, hi = np.full(d, -np.inf), np.full(d, np.inf)
            free = np.full(d, -np.inf)
            for j in range(d):
                for sign in (1.0, -1.0):
                    c = np.zeros(d)
                    c[j] = sign
                    res = solve_lp(LpProblem(c=c, A_ub=self.A, b_ub=self.b, lo=free))
                    if res.status is Status.INFEASIBLE:
                        raise PreconditionFailed("gradient polytope is empty")
                    if res.optimal:
                        if sign > 0:
                            lo[j] = res.x[j]
                        else:
                            hi[j] = res.x[j]
            self._bounds = (lo, hi)
        return self._bounds

    @property
    def bounded(self) -> bool:
        lo, hi = self.bounds()
        return bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))

    def to_dict(self) -> dict:
        lo, hi = self.bounds()
        return {"l_new": self.l_new.tolist(), "lower": lo.tolist(), "upper": hi.tolist(),
                "halfspaces": len(self.b)}


def gradient_polytope(points, grads, l_new) -> GradientPolytope:
    """Gradient bounds at ``l_new`` implied by convexity and gradients at ``points``.

    Raises :class:`DegenerateSpan` unless there are at least ``d + 1`` points
    that affinely span the load space.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    G = np.atleast_2d(np.asarray(grads, dtype=float))
    l_new = np.asarray(l_new, dtype=float).ravel()
    N, d = P.shape
    if G.shape != P.shape:
        raise ValueError("one gradient per point is required")
    if N < d + 1 or np.linalg.matrix_rank(P - P.mean(axis=0)) < d:
        raise DegenerateSpan(f"{N} points do not affinely span {d} dimensions")
    A = P - l_new
    b = np.einsum("ij,ij->i", A, G)
    return GradientPolytope(A=A, b=b, l_new=l_new)


@dataclass
class AuditReport:
    checked: int
    contained: int
    skipped: int
    within_bounds: int
    details: list

    @property
    def containment_rate(self) -> float:
        return self.contained / self.checked if self.checked else 1.0

    def to_dict(self) -> dict:
        return {"checked": self.checked, "contained": self.contained, "skipped": self.skipped,
                "within_bounds": self.within_bounds,
                "containment_rate": self.containment_rate, "details": self.details}


def unseen_region_audit(model: IcnnModel, train_points, test_points, train_grads=None,
                        slack=1e-6) -> AuditReport:
    """Check that the model gradient at hull points lies in the gradient polytope.

    Training gradients default to the model's own gradients there.  Test
    points outside the training hull are skipped and counted.
    """
    P = np.atleast_2d(np.asarray(train_points, dtype=float))
    G = value_and_gradient(model, P)[1] if train_grads is None else np.atleast_2d(train_grads)
    checked = contained = skipped = within = 0
    details = []
    for t in np.atleast_2d(np.asarray(test_points, dtype=float)):
        inside, _ = hull_membership(P, t)
        if not inside:
            skipped += 1
            continue
        poly = gradient_polytope(P, G, t)
        mu = value_and_gradient(model, t)[1]
        ok = poly.contains(mu, slack)
        lo, hi = poly.bounds()
        boxed = bool(np.all(mu >= lo - slack * (1 + np.abs(lo)))
                     and np.all(mu <= hi + slack * (1 + np.abs(hi))))
        checked += 1
        contained += ok
        within += boxed
        details.append({"load": t.tolist(), "mu_hat": mu.tolist(), "contained": bool(ok),
                        "lower": lo.tolist(), "upper": hi.tolist()})
    return AuditReport(checked, contained, skipped, within, details)
