"""Input-convex ReLU network with hand-derived first and second order passes.

Layer ``i`` computes ``z[i+1] = relu(Wz[i] @ z[i] + Wl[i] @ u + b[i])`` where
``u`` is the standardized load; layer 0 has no ``Wz`` term.  The output is
``s * c_out @ z[k]`` with a fixed nonnegative ``c_out`` and ``s > 0``.  With
every ``Wz`` entry nonnegative the map is convex in the load.

Input gradients are products of masked weight matrices.  Freezing the ReLU
masks, the parameter derivative of ``v @ grad`` equals ordinary backprop of
the network's forward-mode tangent along ``v``; :func:`parameter_gradients`
uses that to differentiate losses of both the value and the gradient.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import DimensionMismatch

FORMAT_VERSION = 1


@dataclass
class IcnnModel:
    """Weights of an input-convex network.

    ``Wz[0]`` is ``None``; ``Wz[i]`` has shape ``(h[i], h[i-1])`` and is kept
    nonnegative.  ``Wl[i]`` has shape ``(h[i], d)``.  ``input_offset``,
    ``input_scale`` and ``output_scale`` are fixed standardization constants,
    not trained.
    """

    Wz: list
    Wl: list
    b: list
    c_out: np.ndarray
    input_offset: np.ndarray
    input_scale: np.ndarray
    output_scale: float = 1.0
    seed: int | None = None

    @property
    def k(self) -> int:
        return len(self.Wl)

    @property
    def input_dim(self) -> int:
        return self.Wl[0].shape[1]

    @property
    def widths(self):
        return [w.shape[0] for w in self.Wl]

    def copy(self) -> "IcnnModel":
        return IcnnModel(
            Wz=[None if w is None else w.copy() for w in self.Wz],
            Wl=[w.copy() for w in self.Wl], b=[v.copy() for v in self.b],
            c_out=self.c_out.copy(), input_offset=self.input_offset.copy(),
            input_scale=self.input_scale.copy(), output_scale=self.output_scale,
            seed=self.seed)

    def parameters(self):
        """Trainable arrays in a fixed order (``Wz[1:]``, ``Wl``, ``b``)."""
        return [w for w in self.Wz[1:]] + list(self.Wl) + list(self.b)

    def to_dict(self) -> dict:
        return {
            "format": "icnn",
            "version": FORMAT_VERSION,
            "arch": {"input_dim": self.input_dim, "widths": self.widths},
            "seed": self.seed,
            "weights": {
                "Wz": [None if w is None else w.tolist() for w in self.Wz],
                "Wl": [w.tolist() for w in self.Wl],
                "b": [v.tolist() for v in self.b],
                "c_out": self.c_out.tolist(),
                "input_offset": self.input_offset.tolist(),
                "input_scale": self.input_scale.tolist(),
                "output_scale": float(self.output_scale),
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "IcnnModel":
        if doc.get("format") != "icnn" or doc.get("version") != FORMAT_VERSION:
            raise ValueError("not a supported ICNN model document")
        w = doc["weights"]
        return cls(
            Wz=[None if a is None else np.array(a, dtype=float) for a in w["Wz"]],
            Wl=[np.array(a, dtype=float) for a in w["Wl"]],
            b=[np.array(a, dtype=float) for a in w["b"]],
            c_out=np.array(w["c_out"], dtype=float),
            input_offset=np.array(w["input_offset"], dtype=float),
            input_scale=np.array(w["input_scale"], dtype=float),
            output_scale=float(w["output_scale"]), seed=doc.get("seed"))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "IcnnModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def init_icnn(input_dim, hidden=(64, 64, 64, 64), c_out=None, seed=0,
              input_offset=None, input_scale=None, output_scale=1.0) -> IcnnModel:
    """Random initialization.

    ``Wz ~ |N(0, 1/width)|``, ``Wl ~ N(0, 2/fan_in)``, zero biases.  ``c_out``
    defaults to ones and fixes the width of the last hidden layer.
    """
    hidden = list(hidden)
    if c_out is not None:
        c_out = np.asarray(c_out, dtype=float)
        if np.any(c_out < 0):
            raise ValueError("c_out must be nonnegative for convexity")
        if hidden and hidden[-1] != c_out.size:
            hidden[-1] = c_out.size
        elif not hidden:
            hidden = [c_out.size]
    else:
        c_out = np.ones(hidden[-1])
    rng = np.random.default_rng(seed)
    Wz, Wl, b = [None], [], []
    prev = None
    for i, h in enumerate(hidden):
        if i > 0:
            Wz.append(np.abs(rng.normal(0.0, np.sqrt(1.0 / prev), size=(h, prev))))
        Wl.append(rng.normal(0.0, np.sqrt(2.0 / input_dim), size=(h, input_dim)))
        b.append(np.zeros(h))
        prev = h
    return IcnnModel(
        Wz=Wz, Wl=Wl, b=b, c_out=c_out,
        input_offset=np.zeros(input_dim) if input_offset is None else np.asarray(input_offset, float),
        input_scale=np.ones(input_dim) if input_scale is None else np.asarray(input_scale, float),
        output_scale=float(output_scale), seed=seed)


def project(model: IcnnModel) -> IcnnModel:
    """Clamp every hidden-to-hidden weight to ``[0, inf)`` in place."""
    for w in model.Wz[1:]:
        np.maximum(w, 0.0, out=w)
    return model


def _as_batch(model, load):
    load = np.asarray(load, dtype=float)
    single = load.ndim == 1
    L = np.atleast_2d(load)
    if L.shape[1] != model.input_dim:
        raise DimensionMismatch(f"expected loads of length {model.input_dim}, got {L.shape[1]}")
    return L, single


@dataclass
class _Pass:
    U: np.ndarray           # standardized inputs (B, d)
    z: list = field(default_factory=list)      # z[i] input to layer i (z[0] unused)
    masks: list = field(default_factory=list)  # ReLU masks per layer
    J: np.ndarray | None = None


def _forward(model: IcnnModel, L) -> _Pass:
    U = (L - model.input_offset) / model.input_scale
    p = _Pass(U=U, z=[None])
    h = None
    for i in range(model.k):
        a = U @ model.Wl[i].T + model.b[i]
        if i > 0:
            a += h @ model.Wz[i].T
        mask = a > 0.0
        h = np.where(mask, a, 0.0)
        p.masks.append(mask)
        p.z.append(h)
    p.J = model.output_scale * (h @ model.c_out)
    return p


def _backward_deltas(model: IcnnModel, p: _Pass, top):
    """Adjoints of the pre-activations for an upstream ``top`` on ``z[k]``."""
    deltas = [None] * model.k
    d = p.masks[-1] * top
    deltas[-1] = d
    for i in range(model.k - 1, 0, -1):
        d = p.masks[i - 1] * (d @ model.Wz[i])
        deltas[i - 1] = d
    return deltas


def forward(model: IcnnModel, load):
    """Predicted optimal cost for one load vector or a batch (rows)."""
    L, single = _as_batch(model, load)
    J = _forward(model, L).J
    return float(J[0]) if single else J


def value_and_gradient(model: IcnnModel, load):
    """``(J_hat, mu_hat)`` for a batch; ``mu_hat`` is the input gradient."""
    L, single = _as_batch(model, load)
    p = _forward(model, L)
    deltas = _backward_deltas(model, p, np.broadcast_to(model.c_out, p.z[-1].shape))
    G = sum(d @ w for d, w in zip(deltas, model.Wl))
    mu = model.output_scale * G / model.input_scale
    if single:
        return float(p.J[0]), mu[0]
    return p.J, mu


def input_gradient(model: IcnnModel, load):
    """Exact gradient of the network output w.r.t. the load.

    At a kink (pre-activation exactly zero) the unit counts as inactive.
    """
    return value_and_gradient(model, load)[1]


@dataclass
class ParamGrad:
    Wz: list
    Wl: list
    b: list

    def arrays(self):
        return [w for w in self.Wz[1:]] + list(self.Wl) + list(self.b)


def parameter_gradients(model: IcnnModel, load, upstream) -> ParamGrad:
    """Gradient of a loss ``L(J_hat, mu_hat)`` w.r.t. all trainable weights.

    ``upstream = (dL/dJ_hat, dL/dmu_hat)`` with shapes ``(B,)`` and ``(B, d)``
    (or scalar and ``(d,)`` for one sample).  Contributions are summed over
    the batch.  The path through ``mu_hat`` is differentiated with the ReLU
    masks held fixed, which is exact away from kinks.
    """
    L, single = _as_batch(model, load)
    gJ, gmu = upstream
    gJ = np.atleast_1d(np.asarray(gJ, dtype=float))
    gmu = np.atleast_2d(np.asarray(gmu, dtype=float))
    B = L.shape[0]
    gJ = np.broadcast_to(gJ, (B,))
    gmu = np.broadcast_to(gmu, (B, model.input_dim))

    p = _forward(model, L)
    s = model.output_scale
    deltas = _backward_deltas(model, p, np.broadcast_to(model.c_out, p.z[-1].shape))
    # first-order adjoint: deltas scaled per sample by dL/dJ
    betas = [(s * gJ)[:, None] * d for d in deltas]
    # tangent direction in standardized input space
    v = gmu * (s / model.input_scale)
    tangents = [None]
    dz = None
    for i in range(model.k):
        da = v @ model.Wl[i].T
        if i > 0:
            da += dz @ model.Wz[i].T
        dz = p.masks[i] * da
        tangents.append(dz)

    gWz, gWl, gb = [None], [], []
    for i in range(model.k):
        if i > 0:
            gWz.append(betas[i].T @ p.z[i] + deltas[i].T @ tangents[i])
        gWl.append(betas[i].T @ p.U + deltas[i].T @ v)
        gb.append(betas[i].sum(axis=0))
    return ParamGrad(Wz=gWz, Wl=gWl, b=gb)


def is_convex_on(model: IcnnModel, a, b, t) -> bool:
    """Midpoint-style convexity inequality for one triple (slack 1e-9)."""
    lhs = forward(model, t * np.asarray(a) + (1 - t) * np.asarray(b))
    rhs = t * forward(model, a) + (1 - t) * forward(model, b)
    return lhs <= rhs + 1e-9
