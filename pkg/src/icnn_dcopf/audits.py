"""Desk-scale audits of the generalization guarantees on the single-bus fixture.

The fixture has three unit generators with costs 1, 2, 3, so the optimal cost
is piecewise linear in the load with breakpoints at 1 and 2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import Dataset
from .genbound import same_region_check, training_loss, unseen_region_audit
from .icnn.network import value_and_gradient
from .icnn.training import TrainConfig, init_for_data, train


def single_bus_cost(load):
    load = np.asarray(load, dtype=float)
    return np.minimum(load, 1.0) + 2.0 * np.clip(load - 1.0, 0.0, 1.0) + 3.0 * np.clip(load - 2.0, 0.0, 1.0)


def single_bus_price(load):
    load = np.asarray(load, dtype=float)
    return np.select([load < 1.0, load < 2.0], [1.0, 2.0], 3.0)


def single_bus_dataset(loads) -> Dataset:
    loads = np.asarray(loads, dtype=float).ravel()
    return Dataset(loads[:, None], single_bus_cost(loads), single_bus_price(loads)[:, None])


@dataclass
class DeskAuditConfig:
    hidden: tuple = (4, 4)
    epochs: int = 3000
    learning_rate: float = 0.03
    lr_decay: float = 0.998
    seed: int = 0
    same_region_points: int = 5
    same_region_span: tuple = (1.1, 1.9)
    unseen_points_per_end: int = 8
    trials: int = 100
    well_trained_tol: float = 1e-8
    tol_grad: float = 1e-3

    def train_config(self, batch_size) -> TrainConfig:
        return TrainConfig(hidden=tuple(self.hidden), epochs=self.epochs, optimizer="adam",
                           learning_rate=self.learning_rate, lr_decay=self.lr_decay,
                           batch_size=batch_size, kkt_weight=0.0, seed=self.seed)


def _fit(data: Dataset, cfg: DeskAuditConfig):
    tcfg = cfg.train_config(len(data))
    return train(init_for_data(data, tcfg.hidden, tcfg.seed), data, None, tcfg)


def same_region_audit(cfg: DeskAuditConfig | None = None) -> dict:
    """Train on points of the middle segment and check the gradient over their hull."""
    cfg = cfg or DeskAuditConfig()
    data = single_bus_dataset(np.linspace(*cfg.same_region_span, cfg.same_region_points))
    res = _fit(data, cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    trials = rng.uniform(*cfg.same_region_span, (cfg.trials, 1))
    rep = same_region_check(res.model, data, trials, tol_grad=cfg.tol_grad,
                            well_trained_tol=cfg.well_trained_tol)
    mu = value_and_gradient(res.model, trials)[1].ravel()
    out = rep.to_dict()
    out.update({"max_abs_mu_minus_2": float(np.max(np.abs(mu - 2.0))),
                "passed": bool(rep.passed and rep.training_loss < cfg.well_trained_tol)})
    return out, res.model


def unseen_segment_audit(cfg: DeskAuditConfig | None = None) -> dict:
    """Train on both end segments only and bound the gradient on the middle one."""
    cfg = cfg or DeskAuditConfig()
    k = cfg.unseen_points_per_end
    data = single_bus_dataset(np.r_[np.linspace(0.1, 0.9, k), np.linspace(2.1, 2.9, k)])
    res = _fit(data, cfg)
    rng = np.random.default_rng(cfg.seed + 2)
    test = rng.uniform(1.0, 2.0, (cfg.trials, 1))
    rep = unseen_region_audit(res.model, data.load, test, train_grads=data.mu)
    mu = value_and_gradient(res.model, test)[1].ravel()
    in_box = bool(np.all((mu >= 1.0) & (mu <= 3.0)))
    out = {k_: v for k_, v in rep.to_dict().items() if k_ != "details"}
    out.update({"training_loss": training_loss(res.model, data), "mu_min": float(mu.min()),
                "mu_max": float(mu.max()), "all_in_1_3": in_box,
                "passed": bool(in_box and rep.checked == len(test) and rep.containment_rate == 1.0)})
    return out, res.model
