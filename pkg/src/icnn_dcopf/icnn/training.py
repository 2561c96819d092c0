"""Mini-batch training of the ICNN on regression and KKT-violation losses."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..datasets import Dataset
from ..exceptions import NonFiniteLoss
from ..grid import FlowBasis, GridCase
from .kkt import (KktCandidates, kkt_value_and_grad, augmented_residual, line_duals_from_prices,
                  loss_regression)
from .network import IcnnModel, init_icnn, parameter_gradients, project, value_and_gradient
from ..activeset import solve_from_prices


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``ascent_weight`` > 0 adds a dual-ascent push on helper prices (see
    :func:`kkt_value_and_grad`); 0 keeps the plain KKT-violation gradient.
    ``candidate_refresh`` is how many epochs a helper sample's reconstructed
    ``(x, f)`` is reused before being recomputed from the current prices;
    1 recomputes every epoch.  With ``normalize`` each loss term is divided
    by the squared scale of the quantity it measures (taken from the labeled
    data), so one set of weights works across cases.
    """

    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    hidden: tuple = (64, 64, 64, 64)
    regression_weight: float = 1.0
    kkt_weight: float = 1.0
    value_weight: float = 1.0
    price_weight: float = 1.0
    balance_weight: float = 1.0
    eps_act: float = 1e-6
    flow_eps: float | None = None
    flow_scale: str = "dual"
    use_helper: bool = True
    kkt_on_labeled: bool = True
    candidate_refresh: int = 1
    optimizer: str = "sgd"
    adam_betas: tuple = (0.9, 0.999)
    lr_decay: float = 1.0
    normalize: bool = True
    report_line_terms: bool = False
    ascent_weight: float = 0.0
    ascent_rho: float | None = None

    def validate(self):
        for name in ("learning_rate", "batch_size", "candidate_refresh", "lr_decay"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        for name in ("regression_weight", "kkt_weight", "value_weight", "price_weight",
                     "balance_weight", "eps_act", "ascent_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        if not self.hidden or any(int(h) < 1 for h in self.hidden):
            raise ValueError("hidden widths must be positive")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {k: v for k, v in doc.items() if k in cls.__dataclass_fields__}
        for key in ("hidden", "adam_betas"):
            if key in known:
                known[key] = tuple(known[key])
        return cls(**known).validate()


class _Sgd:
    def __init__(self, params):
        pass

    def step(self, params, grads, lr):
        for p, g in zip(params, grads):
            p -= lr * g


class _Adam:
    def __init__(self, params, betas=(0.9, 0.999), eps=1e-8):
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads, lr):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class Scales:
    value: float = 1.0
    price: float = 1.0
    load: float = 1.0

    @classmethod
    def from_data(cls, data: Dataset) -> "Scales":
        def rms(a):
            r = float(np.sqrt(np.mean(np.square(a)))) if a is not None and a.size else 0.0
            return r if r > 1e-12 else 1.0
        return cls(value=rms(data.J), price=rms(data.mu), load=rms(data.load))


@dataclass
class TrainResult:
    model: IcnnModel
    history: list = field(default_factory=list)
    scales: Scales = field(default_factory=Scales)


def init_for_data(data: Dataset, hidden=(64, 64, 64, 64), seed=0) -> IcnnModel:
    """Random ICNN whose input and output standardization match ``data``."""
    # one common input scale keeps the price map isotropic across buses
    offset = data.load.mean(axis=0)
    spread = data.load.std(axis=0)
    common = float(np.sqrt(np.mean(spread ** 2)))
    spread = np.full_like(spread, common if common > 1e-12 else 1.0)
    J = data.J if data.J is not None and len(data.J) else np.ones(1)
    out = float(max(np.std(J), 1e-3 * np.max(np.abs(J)), 1e-12)) / hidden[-1]
    return init_icnn(data.load.shape[1], hidden=hidden, seed=seed,
                     input_offset=offset, input_scale=spread, output_scale=out)


class _CandidateCache:
    """Reconstructed helper candidates, reused for ``refresh`` epochs."""

    def __init__(self, n_samples, case, refresh, ascent=False, rho=1.0):
        self.epoch = np.full(n_samples, -10 ** 9)
        self.x = np.zeros((n_samples, case.n))
        self.f = np.zeros((n_samples, case.n - 1))
        self.r = np.zeros((n_samples, case.n)) if ascent else None
        self.refresh = refresh
        self.rho = rho

    def get(self, idx, loads, mu_hat, epoch, case, basis, cfg):
        for j, i in enumerate(idx):
            if epoch - self.epoch[i] >= self.refresh:
                x, f, _ = solve_from_prices(case, basis, loads[j], mu_hat[j], eps_act=cfg.eps_act,
                                            flow_eps=cfg.flow_eps, scale=cfg.flow_scale)
                if x is not None:
                    self.x[i], self.f[i] = x, f
                if self.r is not None:
                    self.r[i] = augmented_residual(case, basis, loads[j], mu_hat[j], self.rho)
                self.epoch[i] = epoch
        return KktCandidates(self.x[idx], self.f[idx],
                             ascent_residual=None if self.r is None else self.r[idx])


def _kkt_weights(cfg, scales):
    if not cfg.normalize:
        return cfg.price_weight, cfg.balance_weight
    return cfg.price_weight / scales.price ** 2, cfg.balance_weight / scales.load ** 2


def _reg_weights(cfg, scales):
    if not cfg.normalize:
        return cfg.value_weight, cfg.price_weight
    return cfg.value_weight / scales.value ** 2, cfg.price_weight / scales.price ** 2


def evaluate_losses(model, labeled: Dataset, helper: Dataset | None, cfg: TrainConfig,
                    scales: Scales, case=None, basis=None, line_terms=None):
    """Mean per-sample regression and KKT losses under ``cfg``'s weighting."""
    line_terms = cfg.report_line_terms if line_terms is None else line_terms
    wv, wp = _reg_weights(cfg, scales)
    reg = loss_regression(model, labeled.load, labeled.J, labeled.mu, wv, wp)[0] / max(len(labeled), 1)
    kkt = 0.0
    if case is not None and cfg.kkt_weight > 0:
        kp, kb = _kkt_weights(cfg, scales)
        total, count = 0.0, 0
        parts = []
        if cfg.kkt_on_labeled:
            parts.append((labeled.load, labeled.x, labeled.f))
        if helper is not None and cfg.use_helper and len(helper):
            parts.append((helper.load, None, None))
        for loads, x, f in parts:
            _, mu_hat = value_and_gradient(model, loads)
            if x is None:
                cand = _CandidateCache(len(loads), case, 1).get(
                    np.arange(len(loads)), loads, mu_hat, 0, case, basis, cfg)
            else:
                cand = KktCandidates(x, f)
            if line_terms:
                pairs = [line_duals_from_prices(m, case, basis, cfg.flow_scale) for m in mu_hat]
                cand.lam_lo = np.array([p[0] for p in pairs])
                cand.lam_hi = np.array([p[1] for p in pairs])
            total += kkt_value_and_grad(case, basis, loads, mu_hat, cand, kp, kb)[0]
            count += len(loads)
        kkt = total / max(count, 1)
    return reg, kkt


def train(model: IcnnModel, labeled: Dataset, helper: Dataset | None = None,
          cfg: TrainConfig | None = None, case: GridCase | None = None,
          basis: FlowBasis | None = None, scales: Scales | None = None) -> TrainResult:
    """Projected mini-batch descent on ``w_R * L_R + w_K * L_K``.

    ``L_R`` covers the labeled set; ``L_K`` covers the labeled set (with
    label candidates) and the helper set (with reconstructed candidates).
    The model is copied, never modified in place.  The per-epoch history
    holds the mean losses of the steps taken in that epoch.
    """
    cfg = (cfg or TrainConfig()).validate()
    if len(labeled) == 0 or not labeled.labeled:
        raise ValueError("training needs a non-empty labeled dataset")
    use_kkt = case is not None and cfg.kkt_weight > 0
    if use_kkt and basis is None:
        raise ValueError("the KKT loss needs the flow basis")
    model = project(model.copy())
    scales = scales or Scales.from_data(labeled)
    helper = helper if (use_kkt and cfg.use_helper and helper is not None and len(helper)) else None
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    opt = _Adam(params, cfg.adam_betas) if cfg.optimizer == "adam" else _Sgd(params)
    wv, wp = _reg_weights(cfg, scales)
    kp, kb = _kkt_weights(cfg, scales)
    ka = cfg.ascent_weight * (2.0 / (scales.price * scales.load) if cfg.normalize else 1.0)
    rho = cfg.ascent_rho or scales.price / scales.load
    cache = _CandidateCache(len(helper), case, cfg.candidate_refresh, ka > 0, rho) if helper is not None else None

    n_lab = len(labeled)
    steps = max(1, math.ceil(n_lab / cfg.batch_size))
    history = []
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        lab_order = np.array_split(rng.permutation(n_lab), steps)
        help_order = (np.array_split(rng.permutation(len(helper)), steps)
                      if helper is not None else [np.zeros(0, dtype=int)] * steps)
        reg_sum = kkt_sum = 0.0
        for li, hi in zip(lab_order, help_order):
            loads = labeled.load[li]
            J_hat, mu_hat = value_and_gradient(model, loads)
            rJ = J_hat - labeled.J[li]
            rmu = mu_hat - labeled.mu[li]
            reg = wv * np.sum(rJ ** 2) + wp * np.sum(rmu ** 2)
            gJ = cfg.regression_weight * 2.0 * wv * rJ / len(li)
            gmu = cfg.regression_weight * 2.0 * wp * rmu / len(li)
            grads = parameter_gradients(model, loads, (gJ, gmu)).arrays()
            kkt = 0.0
            if use_kkt:
                denom = (len(li) if cfg.kkt_on_labeled else 0) + len(hi)
                if cfg.kkt_on_labeled:
                    cand = KktCandidates(labeled.x[li], labeled.f[li])
                    v, g = kkt_value_and_grad(case, basis, loads, mu_hat, cand, kp, kb)
                    kkt += v
                    if np.any(g):
                        extra = parameter_gradients(
                            model, loads, (np.zeros(len(li)), cfg.kkt_weight * g / denom)).arrays()
                        grads = [a + b for a, b in zip(grads, extra)]
                if len(hi):
                    hl = helper.load[hi]
                    _, mu_h = value_and_gradient(model, hl)
                    cand = cache.get(hi, hl, mu_h, epoch, case, basis, cfg)
                    v, g = kkt_value_and_grad(case, basis, hl, mu_h, cand, kp, kb, ka)
                    kkt += v
                    if np.any(g):
                        extra = parameter_gradients(
                            model, hl, (np.zeros(len(hi)), cfg.kkt_weight * g / denom)).arrays()
                        grads = [a + b for a, b in zip(grads, extra)]
                kkt /= max(denom, 1)
            reg /= len(li)
            if not (np.isfinite(reg) and np.isfinite(kkt)
                    and all(np.all(np.isfinite(g)) for g in grads)):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}",
                                    batch={"epoch": epoch, "labeled": li.tolist(),
                                           "helper": np.asarray(hi).tolist()})
            opt.step(params, grads, lr)
            project(model)
            reg_sum += reg
            kkt_sum += kkt
        lr *= cfg.lr_decay
        reg_mean = reg_sum / steps
        kkt_mean = kkt_sum / steps
        history.append({"epoch": epoch + 1, "regression": reg_mean, "kkt": kkt_mean,
                        "loss": cfg.regression_weight * reg_mean + cfg.kkt_weight * kkt_mean})
    return TrainResult(model=model, history=history, scales=scales)


def loss_trend_decreasing(history, window=10) -> bool:
    """Whether the mean loss of the last ``window`` epochs is below the first ``window``."""
    if len(history) < 2:
        return True
    w = max(1, min(window, len(history) // 2))
    first = np.mean([h["loss"] for h in history[:w]])
    last = np.mean([h["loss"] for h in history[-w:]])
    return bool(last <= first)
