"""End-to-end comparison model: a plain ReLU MLP mapping loads to dispatch."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import DimensionMismatch, NonFiniteLoss
from ..grid import FlowBasis
from .training import _Adam, _Sgd


@dataclass
class MlpModel:
    """``x_hat = W[-1] @ relu(... relu(W[0] @ u + b[0]) ...) + b[-1]`` scaled back.

    ``u`` is the standardized load; outputs are in units of ``output_scale``.
    """

    W: list
    b: list
    input_offset: np.ndarray
    input_scale: np.ndarray
    output_scale: np.ndarray
    seed: int | None = None

    @property
    def input_dim(self) -> int:
        return self.W[0].shape[1]

    def parameters(self):
        return list(self.W) + list(self.b)

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.W], [v.copy() for v in self.b],
                        self.input_offset.copy(), self.input_scale.copy(),
                        self.output_scale.copy(), self.seed)

    def to_dict(self) -> dict:
        return {"format": "mlp", "version": 1, "seed": self.seed,
                "arch": {"widths": [w.shape[0] for w in self.W]},
                "weights": {"W": [w.tolist() for w in self.W], "b": [v.tolist() for v in self.b],
                            "input_offset": self.input_offset.tolist(),
                            "input_scale": self.input_scale.tolist(),
                            "output_scale": self.output_scale.tolist()}}

    @classmethod
    def from_dict(cls, doc) -> "MlpModel":
        if doc.get("format") != "mlp":
            raise ValueError("not an MLP model document")
        w = doc["weights"]
        arr = (lambda a: np.array(a, dtype=float))
        return cls([arr(a) for a in w["W"]], [arr(a) for a in w["b"]], arr(w["input_offset"]),
                   arr(w["input_scale"]), arr(w["output_scale"]), doc.get("seed"))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "MlpModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def init_mlp(input_dim, output_dim, hidden=(64, 64, 64), seed=0, input_offset=None,
             input_scale=None, output_scale=None) -> MlpModel:
    """He-initialized MLP; ``len(hidden) + 1`` weight layers."""
    rng = np.random.default_rng(seed)
    sizes = [input_dim, *hidden, output_dim]
    W = [rng.normal(0.0, np.sqrt(2.0 / a), size=(b, a)) for a, b in zip(sizes[:-1], sizes[1:])]
    b = [np.zeros(s) for s in sizes[1:]]
    return MlpModel(W, b,
                    np.zeros(input_dim) if input_offset is None else np.asarray(input_offset, float),
                    np.ones(input_dim) if input_scale is None else np.asarray(input_scale, float),
                    np.ones(output_dim) if output_scale is None else np.asarray(output_scale, float),
                    seed)


def _forward(model: MlpModel, L):
    acts = [(L - model.input_offset) / model.input_scale]
    for i, (w, b) in enumerate(zip(model.W, model.b)):
        a = acts[-1] @ w.T + b
        acts.append(a if i == len(model.W) - 1 else np.maximum(a, 0.0))
    return acts


def predict_mlp(model: MlpModel, load):
    load = np.asarray(load, dtype=float)
    L = np.atleast_2d(load)
    if L.shape[1] != model.input_dim:
        raise DimensionMismatch(f"expected loads of length {model.input_dim}")
    out = _forward(model, L)[-1] * model.output_scale
    return out[0] if load.ndim == 1 else out


def _grads(model, L, Y):
    acts = _forward(model, L)
    r = acts[-1] - Y / model.output_scale
    loss = float(np.sum(r ** 2))
    d = 2.0 * r / len(L)
    gW, gb = [None] * len(model.W), [None] * len(model.W)
    for i in range(len(model.W) - 1, -1, -1):
        gW[i] = d.T @ acts[i]
        gb[i] = d.sum(axis=0)
        if i:
            d = (d @ model.W[i]) * (acts[i] > 0)
    return loss / len(L), gW + gb


def train_mlp(model: MlpModel, load, target, epochs=200, batch_size=32, learning_rate=1e-3,
              optimizer="adam", seed=0):
    """Minimize the mean squared dispatch error; returns ``(model, loss history)``."""
    model = model.copy()
    L = np.atleast_2d(np.asarray(load, dtype=float))
    Y = np.atleast_2d(np.asarray(target, dtype=float))
    rng = np.random.default_rng(seed)
    params = model.parameters()
    opt = _Adam(params) if optimizer == "adam" else _Sgd(params)
    steps = max(1, math.ceil(len(L) / batch_size))
    history = []
    for epoch in range(epochs):
        total = 0.0
        for idx in np.array_split(rng.permutation(len(L)), steps):
            loss, grads = _grads(model, L[idx], Y[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}",
                                    batch={"epoch": epoch, "labeled": idx.tolist()})
            opt.step(params, grads, learning_rate)
            total += loss
        history.append(total / steps)
    return model, history


def flows_from_dispatch(basis: FlowBasis, load, x):
    """Fundamental flows closest (least squares) to the nodal balance ``A_tilde f = load - x``."""
    load = np.atleast_2d(load)
    x = np.atleast_2d(x)
    f = np.linalg.lstsq(basis.A_tilde, (load - x).T, rcond=None)[0].T
    return f
