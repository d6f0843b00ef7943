# permitwatch/services/nets.py
"""Forecaster definitions: model spec, flat parameter layout, batched forward and backward passes.

All parameters live in one float64 vector; each net reads named views into it, so
gradients come back in the same flat layout and the optimizer never sees tensors.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from ..errors import ConfigError, GeometryError

DEFAULT_HIDDEN = {"MLP": 64, "LSTM": 25}


class ModelKind(str, Enum):
    PERSISTENCE = "Persistence"
    LINEAR = "Linear"
    MLP = "MLP"
    LSTM = "LSTM"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        v = str(value or "").strip().lower()
        for k in cls:
            if k.value.lower() == v:
                return k
        raise ConfigError(f"unknown model kind {value!r}; choose from {[k.value for k in cls]}")


class OutputHead(str, Enum):
    RAW = "Raw"
    LOGITS = "Logits"


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    input_dim: int
    lookback: int
    horizon: int
    hidden: int | None = None
    layers: int = 2
    output_head: OutputHead = OutputHead.RAW
    gap: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        object.__setattr__(self, "output_head", OutputHead(self.output_head))
        if self.hidden is None and self.kind.value in DEFAULT_HIDDEN:
            object.__setattr__(self, "hidden", DEFAULT_HIDDEN[self.kind.value])

    def validate(self):
        if self.input_dim < 1 or self.lookback < 1 or self.horizon < 1 or self.gap < 0:
            raise ConfigError(f"invalid model geometry: {self}")
        if self.kind in (ModelKind.MLP, ModelKind.LSTM) and (self.hidden or 0) < 1:
            raise ConfigError(f"{self.kind.value} needs hidden >= 1")
        if self.kind == ModelKind.LSTM and self.layers < 1:
            raise ConfigError("LSTM needs layers >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["output_head"] = self.output_head.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            kind=ModelKind.parse(d["kind"]),
            input_dim=int(d["input_dim"]),
            lookback=int(d["lookback"]),
            horizon=int(d["horizon"]),
            hidden=d.get("hidden"),
            layers=int(d.get("layers", 2)),
            output_head=OutputHead(d.get("output_head", "Raw")),
            gap=int(d.get("gap", 0)),
        )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


sigmoid = _sigmoid


class Net:
    """Base: `layout` lists (name, shape, fan_in); forward returns (out [B, L_f], cache)."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec

    def layout(self) -> list[tuple[str, tuple[int, ...], int]]:
        return []

    def forward(self, P: dict, X: np.ndarray, ref: np.ndarray | None):
        raise NotImplementedError

    def backward(self, P: dict, cache, dout: np.ndarray) -> dict:
        raise NotImplementedError


class PersistenceNet(Net):
    def forward(self, P, X, ref):
        if ref is None:
            raise GeometryError("Persistence needs the reference permit of each window")
        ref = np.asarray(ref, dtype=np.float64).reshape(-1, 1)
        return np.repeat(ref, self.spec.horizon, axis=1), None

    def backward(self, P, cache, dout):
        return {}


class LinearNet(Net):
    def layout(self):
        s = self.spec
        fan = s.lookback * s.input_dim
        return [("W", (fan, s.horizon), fan), ("b", (s.horizon,), fan)]

    def forward(self, P, X, ref):
        Xf = X.reshape(X.shape[0], -1)
        return Xf @ P["W"] + P["b"], Xf

    def backward(self, P, Xf, dout):
        return {"W": Xf.T @ dout, "b": dout.sum(axis=0)}


class MLPNet(Net):
    def layout(self):
        s = self.spec
        fan = s.lookback * s.input_dim
        h = s.hidden
        return [("W1", (fan, h), fan), ("b1", (h,), fan),
                ("W2", (h, s.horizon), h), ("b2", (s.horizon,), h)]

    def forward(self, P, X, ref):
        Xf = X.reshape(X.shape[0], -1)
        a = np.tanh(Xf @ P["W1"] + P["b1"])
        return a @ P["W2"] + P["b2"], (Xf, a)

    def backward(self, P, cache, dout):
        Xf, a = cache
        da = (dout @ P["W2"].T) * (1.0 - a * a)
        return {"W1": Xf.T @ da, "b1": da.sum(axis=0), "W2": a.T @ dout, "b2": dout.sum(axis=0)}


class LSTMNet(Net):
    """Stacked LSTM, gate order (input, forget, cell, output), head on the last hidden state."""

    def layout(self):
        s = self.spec
        h = s.hidden
        out = []
        for layer in range(s.layers):
            n_in = s.input_dim if layer == 0 else h
            out += [
                (f"W_ih{layer}", (4 * h, n_in), n_in),
                (f"W_hh{layer}", (4 * h, h), h),
                (f"b_ih{layer}", (4 * h,), h),
                (f"b_hh{layer}", (4 * h,), h),
            ]
        out += [("W", (h, s.horizon), h), ("b", (s.horizon,), h)]
        return out

    def forward(self, P, X, ref):
        s = self.spec
        B, T, _ = X.shape
        h = s.hidden
        seq = X
        caches = []
        for layer in range(s.layers):
            W_ih, W_hh = P[f"W_ih{layer}"], P[f"W_hh{layer}"]
            bias = P[f"b_ih{layer}"] + P[f"b_hh{layer}"]
            hs = np.zeros((T + 1, B, h))
            cs = np.zeros((T + 1, B, h))
            gates = np.empty((T, B, 4 * h))
            xw = seq @ W_ih.T  # [B, T, 4h]
            for t in range(T):
                a = xw[:, t] + hs[t] @ W_hh.T + bias
                i = _sigmoid(a[:, :h])
                f = _sigmoid(a[:, h:2 * h])
                g = np.tanh(a[:, 2 * h:3 * h])
                o = _sigmoid(a[:, 3 * h:])
                cs[t + 1] = f * cs[t] + i * g
                hs[t + 1] = o * np.tanh(cs[t + 1])
                gates[t] = np.concatenate([i, f, g, o], axis=1)
            caches.append((seq, hs, cs, gates))
            seq = np.transpose(hs[1:], (1, 0, 2))
        last = seq[:, -1]
        return last @ P["W"] + P["b"], (caches, last)

    def backward(self, P, cache, dout):
        s = self.spec
        h = s.hidden
        caches, last = cache
        grads = {"W": last.T @ dout, "b": dout.sum(axis=0)}
        B = dout.shape[0]
        T = caches[0][0].shape[1]
        dseq = np.zeros((B, T, h))
        dseq[:, -1] = dout @ P["W"].T
        for layer in reversed(range(s.layers)):
            seq, hs, cs, gates = caches[layer]
            W_ih, W_hh = P[f"W_ih{layer}"], P[f"W_hh{layer}"]
            dW_ih = np.zeros_like(W_ih)
            dW_hh = np.zeros_like(W_hh)
            db = np.zeros(4 * h)
            dx = np.zeros_like(seq)
            dh_next = np.zeros((B, h))
            dc_next = np.zeros((B, h))
            for t in reversed(range(T)):
                i, f, g, o = (gates[t][:, k * h:(k + 1) * h] for k in range(4))
                tc = np.tanh(cs[t + 1])
                dh = dseq[:, t] + dh_next
                dc = dc_next + dh * o * (1.0 - tc * tc)
                da = np.concatenate([
                    dc * g * i * (1.0 - i),
                    dc * cs[t] * f * (1.0 - f),
                    dc * i * (1.0 - g * g),
                    dh * tc * o * (1.0 - o),
                ], axis=1)
                dW_ih += da.T @ seq[:, t]
                dW_hh += da.T @ hs[t]
                db += da.sum(axis=0)
                dx[:, t] = da @ W_ih
                dh_next = da @ W_hh
                dc_next = dc * f
            grads[f"W_ih{layer}"] = dW_ih
            grads[f"W_hh{layer}"] = dW_hh
            grads[f"b_ih{layer}"] = db
            grads[f"b_hh{layer}"] = db.copy()
            dseq = dx
        return grads


NETS: dict[ModelKind, type[Net]] = {
    ModelKind.PERSISTENCE: PersistenceNet,
    ModelKind.LINEAR: LinearNet,
    ModelKind.MLP: MLPNet,
    ModelKind.LSTM: LSTMNet,
}


def build_net(spec: ModelSpec) -> Net:
    spec.validate()
    return NETS[spec.kind](spec)


def param_count(spec: ModelSpec) -> int:
    return int(sum(int(np.prod(shape)) for _, shape, _ in build_net(spec).layout()))


def unpack(net: Net, params: np.ndarray) -> dict[str, np.ndarray]:
    """Named reshaped views into the flat parameter vector."""
    out, pos = {}, 0
    for name, shape, _ in net.layout():
        n = int(np.prod(shape))
        out[name] = params[pos:pos + n].reshape(shape)
        pos += n
    return out


def pack(net: Net, grads: dict[str, np.ndarray]) -> np.ndarray:
    parts = [np.asarray(grads[name], dtype=np.float64).ravel() for name, _, _ in net.layout()]
    return np.concatenate(parts) if parts else np.zeros(0)


def init_params(spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) per tensor, in layout order."""
    net = build_net(spec)
    parts = []
    for _, shape, fan_in in net.layout():
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        parts.append(rng.uniform(-bound, bound, size=int(np.prod(shape))))
    return np.concatenate(parts) if parts else np.zeros(0)


def check_input(spec: ModelSpec, X: np.ndarray):
    if X.ndim != 3 or X.shape[1] != spec.lookback or X.shape[2] != spec.input_dim:
        raise GeometryError(
            f"expected windows of shape [B, {spec.lookback}, {spec.input_dim}], got {list(X.shape)}")


def forward_batch(spec: ModelSpec, params: np.ndarray, X: np.ndarray,
                  ref: np.ndarray | None = None) -> np.ndarray:
    net = build_net(spec)
    X = np.asarray(X, dtype=np.float64)
    check_input(spec, X)
    out, _ = net.forward(unpack(net, params), X, ref)
    return out


def to_scores(spec: ModelSpec, outputs: np.ndarray) -> np.ndarray:
    """Map raw model outputs onto [0, 1] for thresholding."""
    if spec.output_head == OutputHead.LOGITS:
        return _sigmoid(np.asarray(outputs, dtype=np.float64))
    return np.clip(outputs, 0.0, 1.0)
