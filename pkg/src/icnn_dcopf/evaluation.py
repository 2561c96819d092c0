"""Solution quality metrics, the unseen-region experiment and timing."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .activeset import solve_from_prices
from .datasets import Dataset, solve_loads
from .exceptions import RegionCountMismatch
from .genbound import fingerprint_regions
from .grid import FlowBasis, GridCase
from .icnn.baseline import MlpModel, flows_from_dispatch, init_mlp, predict_mlp, train_mlp
from .icnn.network import IcnnModel, value_and_gradient
from .icnn.training import TrainConfig, init_for_data, train
from .lp import solve_dcopf

FAMILIES = ("balance", "generator", "line")


def classify(case: GridCase, basis: FlowBasis, load, x, f, J_star, tol=0.003):
    """Bucket one predicted dispatch: ``("optimal" | "feasible" | "infeasible", violated)``.

    A constraint may be violated by ``tol`` relative to its governing limit
    (floored at 1); the balance is measured against ``max(1, |load|_inf)``.
    ``violated`` lists every constraint family that exceeds the allowance.
    """
    if x is None or f is None or not (np.all(np.isfinite(x)) and np.all(np.isfinite(f))):
        return "infeasible", list(FAMILIES)
    load = np.asarray(load, dtype=float)
    violated = []
    balance = np.max(np.abs(load - x - basis.A_tilde @ f), initial=0.0)
    if balance > tol * max(1.0, float(np.max(np.abs(load), initial=0.0))):
        violated.append("balance")
    gen_allow = tol * np.maximum(1.0, case.xmax)
    if np.any(x < -gen_allow) or np.any(x > case.xmax + gen_allow):
        violated.append("generator")
    if np.any(np.abs(basis.K @ f) > case.fmax + tol * np.maximum(1.0, case.fmax)):
        violated.append("line")
    if violated:
        return "infeasible", violated
    if abs(float(case.cost @ x) - J_star) <= tol * max(1.0, abs(J_star)):
        return "optimal", violated
    return "feasible", violated


@dataclass
class EvalReport:
    n: int = 0
    optimal: int = 0
    feasible: int = 0
    infeasible: int = 0
    violations: dict = field(default_factory=lambda: {k: 0 for k in FAMILIES})
    inference_times: list = field(default_factory=list, repr=False)
    exact_times: list = field(default_factory=list, repr=False)
    mode: str = "icnn"

    @property
    def optimality_ratio(self) -> float:
        return self.optimal / self.n if self.n else 0.0

    @property
    def feasibility_ratio(self) -> float:
        """Optimal or feasible, as a fraction of all samples."""
        return (self.optimal + self.feasible) / self.n if self.n else 0.0

    def percentages(self) -> dict:
        if not self.n:
            return {"optimal": 0.0, "feasible": 0.0, "infeasible": 0.0}
        return {k: 100.0 * getattr(self, k) / self.n for k in ("optimal", "feasible", "infeasible")}

    def violation_ratios(self) -> dict:
        return {k: (v / self.n if self.n else 0.0) for k, v in self.violations.items()}

    def timing(self) -> dict:
        def stats(t):
            return {"mean": float(np.mean(t)), "median": float(np.median(t))} if t else {}
        return {"inference": stats(self.inference_times), "exact": stats(self.exact_times)}

    def to_dict(self, timing=True) -> dict:
        out = {"mode": self.mode, "n": self.n, "optimal": self.optimal, "feasible": self.feasible,
               "infeasible": self.infeasible, "percent": self.percentages(),
               "optimality_ratio": self.optimality_ratio,
               "feasibility_ratio": self.feasibility_ratio,
               "violation_ratio": self.violation_ratios()}
        if timing:
            out["timing"] = self.timing()
        return out

    def text(self) -> str:
        p = self.percentages()
        rows = [("mode", self.mode), ("samples", str(self.n)),
                ("optimal %", f"{p['optimal']:.2f}"), ("feasible-suboptimal %", f"{p['feasible']:.2f}"),
                ("infeasible %", f"{p['infeasible']:.2f}")]
        rows += [(f"{k} violation %", f"{100 * v:.2f}") for k, v in self.violation_ratios().items()]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{a:<{width}}  {b:>10}" for a, b in rows)


def predict_dispatch(case, basis, model, loads, mode="icnn", eps_act=1e-6, flow_eps=None,
                     flow_scale="dual"):
    """Predicted ``(x, f)`` per load and the per-sample inference time."""
    out = []
    for load in np.atleast_2d(loads):
        t0 = time.perf_counter()
        if mode == "icnn":
            mu = model(load) if callable(model) else value_and_gradient(model, load)[1]
            x, f, _ = solve_from_prices(case, basis, load, mu, eps_act=eps_act,
                                        flow_eps=flow_eps, scale=flow_scale)
        elif mode == "end_to_end":
            x = predict_mlp(model, load)
            f = flows_from_dispatch(basis, load, x)[0]
        else:
            raise ValueError(f"unknown mode {mode!r}")
        out.append((x, f, time.perf_counter() - t0))
    return out


def evaluate(case: GridCase, basis: FlowBasis, model, test: Dataset, mode="icnn",
             mismatch_tol=0.003, eps_act=1e-6, flow_eps=None, flow_scale="dual",
             time_exact=False) -> EvalReport:
    """Classify every test sample and count constraint-family violations.

    ``mode="icnn"`` reconstructs dispatch from the model's prices (``model``
    may also be any callable mapping a load to prices),
    ``"end_to_end"`` uses an MLP's dispatch with flows from the nodal balance.
    ``time_exact`` also times a full simplex solve per sample.
    """
    report = EvalReport(mode=mode)
    preds = predict_dispatch(case, basis, model, test.load, mode, eps_act, flow_eps, flow_scale)
    for i, (x, f, dt) in enumerate(preds):
        bucket, violated = classify(case, basis, test.load[i], x, f, float(test.J[i]), mismatch_tol)
        report.n += 1
        setattr(report, bucket, getattr(report, bucket) + 1)
        for fam in violated:
            report.violations[fam] += 1
        report.inference_times.append(dt)
        if time_exact:
            t0 = time.perf_counter()
            solve_dcopf(case, basis, test.load[i])
            report.exact_times.append(time.perf_counter() - t0)
    return report


def curve_rows(model: IcnnModel, case, basis, load0, direction, steps=101, t_max=1.0):
    """Rows ``(t, J*, J_hat, slope*, slope_hat)`` along a load ray, for plotting."""
    load0 = np.asarray(load0, dtype=float)
    direction = np.asarray(direction, dtype=float)
    rows = []
    for t in np.linspace(0.0, t_max, steps):
        load = load0 + t * direction
        sol = solve_dcopf(case, basis, load)
        J_hat, mu_hat = value_and_gradient(model, load)
        J_star = sol.J if sol.feasible else float("nan")
        slope = float(sol.mu @ direction) if sol.feasible else float("nan")
        rows.append((float(t), J_star, float(J_hat), slope, float(mu_hat @ direction)))
    return rows


@dataclass
class UnseenConfig:
    buses: tuple = (1, 2)
    ranges: tuple = ((0.0, 110.0), (0.0, 110.0))
    test_anchor: tuple = (80.0, 80.0)
    samples: int = 1000
    helper_samples: int = 100
    seed: int = 0
    mismatch_tol: float = 0.003
    eps_act: float = 1.5
    flow_eps: float | None = 5.0
    ascent_weight: float = 30.0
    literal_variant: bool = True
    mlp_hidden: tuple = (64, 64, 64)
    mlp_epochs: int = 300
    mlp_learning_rate: float = 1e-3


def _plane_loads(case, cfg: UnseenConfig, count, rng):
    L = np.tile(case.load_nominal, (count, 1))
    for k, bus in enumerate(cfg.buses):
        lo, hi = cfg.ranges[k]
        L[:, bus] = rng.uniform(lo, hi, count)
    return L


def run_unseen_region_experiment(case: GridCase, basis: FlowBasis, cfg: UnseenConfig,
                                 train_cfg: TrainConfig, progress=None) -> dict:
    """Hold out one price region of a two-bus load plane and compare predictors.

    The held-out region is the one containing ``test_anchor``.  Predictors
    trained on the remaining regions: the ICNN with a helper set spread over
    the whole plane (KKT loss plus dual ascent with ``cfg.ascent_weight``),
    optionally the same with the KKT loss alone, the ICNN without a helper,
    and the MLP.
    """
    rng = np.random.default_rng(cfg.seed)
    data, _ = solve_loads(case, _plane_loads(case, cfg, cfg.samples, rng), basis)
    data = data.nondegenerate()
    regions = fingerprint_regions(data, resolution=1e-6)
    if len(regions) < 2:
        raise RegionCountMismatch(f"found {len(regions)} price region(s); need at least 2")
    anchor = case.load_nominal.copy()
    anchor[list(cfg.buses)] = cfg.test_anchor
    sol = solve_dcopf(case, basis, anchor)
    if not sol.feasible:
        raise RegionCountMismatch("test anchor is infeasible")
    key = tuple(float(v) for v in np.round(sol.mu / 1e-6) * 1e-6 + 0.0)
    test_idx = next((r.indices for r in regions if r.mu == key), [])
    if not test_idx:
        raise RegionCountMismatch("no samples fall in the anchor's region")
    mask = np.zeros(len(data), dtype=bool)
    mask[test_idx] = True
    train_set, test_set = data.subset(np.flatnonzero(~mask)), data.subset(np.flatnonzero(mask))
    helper = Dataset(_plane_loads(case, cfg, cfg.helper_samples, rng))

    variants = [("icnn_helper", helper, replace(train_cfg, ascent_weight=cfg.ascent_weight))]
    if cfg.literal_variant:
        variants.append(("icnn_helper_kkt_only", helper, replace(train_cfg, ascent_weight=0.0)))
    variants.append(("icnn_no_helper", None, replace(train_cfg, ascent_weight=0.0)))
    results = {}
    for name, help_set, tcfg in variants:
        if progress:
            progress(f"training {name}")
        model = init_for_data(train_set, tcfg.hidden, tcfg.seed)
        res = train(model, train_set, help_set, tcfg, case, basis)
        rep = evaluate(case, basis, res.model, test_set, "icnn", cfg.mismatch_tol,
                       cfg.eps_act, cfg.flow_eps, tcfg.flow_scale)
        results[name] = {"report": rep.to_dict(timing=False),
                         "final_loss": res.history[-1] if res.history else None}
    if progress:
        progress("training end_to_end")
    mlp = train_end_to_end(train_set, cfg.mlp_hidden, cfg.mlp_epochs, cfg.mlp_learning_rate, cfg.seed)
    rep = evaluate(case, basis, mlp, test_set, "end_to_end", cfg.mismatch_tol)
    results["end_to_end"] = {"report": rep.to_dict(timing=False)}
    return {"regions": [r.to_dict() | {"indices": None} for r in regions],
            "region_sizes": [len(r.indices) for r in regions],
            "train_size": len(train_set), "test_size": len(test_set),
            "helper_size": len(helper), "results": results}


def train_end_to_end(data: Dataset, hidden=(64, 64, 64), epochs=300, learning_rate=1e-3,
                     seed=0, batch_size=32) -> MlpModel:
    offset = data.load.mean(axis=0)
    spread = data.load.std(axis=0)
    spread = np.where(spread > 1e-9 * (1.0 + np.abs(offset)), spread, 1.0)
    out_scale = np.maximum(np.abs(data.x).max(axis=0), 1.0)
    model = init_mlp(data.load.shape[1], data.x.shape[1], hidden, seed, offset, spread, out_scale)
    model, _ = train_mlp(model, data.load, data.x, epochs, batch_size, learning_rate, "adam", seed)
    return model


def bench(case: GridCase, basis: FlowBasis, model: IcnnModel, data: Dataset, eps_act=1e-6,
          flow_eps=None, repeats=1) -> dict:
    """Per-sample wall clock of the simplex solve versus prices plus reconstruction."""
    rows = []
    for load in data.load:
        t_lp = t_nn = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            solve_dcopf(case, basis, load)
            t1 = time.perf_counter()
            mu = value_and_gradient(model, load)[1]
            solve_from_prices(case, basis, load, mu, eps_act=eps_act, flow_eps=flow_eps)
            t2 = time.perf_counter()
            t_lp, t_nn = min(t_lp, t1 - t0), min(t_nn, t2 - t1)
        rows.append({"simplex": t_lp, "icnn": t_nn})
    out = {"rows": rows}
    if rows:
        lp = float(np.median([r["simplex"] for r in rows]))
        nn = float(np.median([r["icnn"] for r in rows]))
        out.update({"median_simplex": lp, "median_icnn": nn, "ratio": lp / nn if nn > 0 else None})
    return out


def unseen_train_config(**overrides) -> TrainConfig:
    """Training settings used by the unseen-region experiment."""
    base = dict(epochs=300, optimizer="adam", learning_rate=3e-3, lr_decay=0.997, batch_size=8,
                candidate_refresh=2, eps_act=1.5)
    base.update(overrides)
    return TrainConfig(**base)


def learned_price_thresholds(case: GridCase):
    """Default ``(eps_act, flow_eps)`` for prices from a trained model.

    Learned prices miss cost plateaus by a few percent, so the detection
    thresholds scale with the largest generator cost.
    """
    top = float(np.max(np.abs(case.cost), initial=1.0))
    return 0.025 * top, 0.1 * top
