# permitwatch/services/training.py
"""Mini-batch Adam training with value-then-norm clipping, exponential lr decay and early stopping."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from ..errors import ConfigError, GeometryError, InvariantError, ShapeError, TrainingError
from ..utils import child_rng
from .dataset import WindowSample, WindowSet, as_window_set
from .losses import LossKind, loss_grad
from .nets import ModelKind, ModelSpec, OutputHead, build_net, check_input, init_params, pack, param_count, to_scores, unpack

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
EVAL_BATCH = 2048
GRAD_FLOOR = 1e-8


@dataclass
class TrainConfig:
    lr: float = 5e-4
    clip_value: float = 0.5
    clip_norm: float = 1.0
    batch: int = 254
    max_epochs: int = 500
    min_delta: float = 1e-6
    patience: int = 10
    restore_best: bool = True
    lr_gamma: float = 0.999
    loss: LossKind = LossKind.MSE
    seed: int = 0

    def __post_init__(self):
        self.loss = LossKind.parse(self.loss)

    def validate(self):
        for name in ("lr", "clip_value", "clip_norm", "lr_gamma"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.batch < 1 or self.max_epochs < 1 or self.patience < 1 or self.min_delta < 0:
            raise ConfigError("batch, max_epochs and patience must be >= 1; min_delta >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = self.loss.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class TrainedModel:
    spec: ModelSpec
    params: np.ndarray
    history: list[tuple[float, float, float]] = field(default_factory=list)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.size != param_count(self.spec):
            raise ShapeError(f"{self.params.size} parameters, spec needs {param_count(self.spec)}")
        self.params.setflags(write=False)
        self._net = build_net(self.spec)
        self._views = unpack(self._net, self.params)

    def predict(self, X: np.ndarray, ref: np.ndarray | None = None) -> np.ndarray:
        """Raw outputs [B, L_f] for a batch of look-back windows."""
        X = np.asarray(X, dtype=np.float64)
        check_input(self.spec, X)
        out, _ = self._net.forward(self._views, X, ref)
        return out

    def scores(self, X: np.ndarray, ref: np.ndarray | None = None) -> np.ndarray:
        return to_scores(self.spec, self.predict(X, ref))


def forward(model: TrainedModel, window: WindowSample) -> np.ndarray:
    out = model.predict(window.lookback[None, :, :], np.array([window.ref_permit]))
    return out[0]


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    return cfg.lr * cfg.lr_gamma ** epoch


def clip_gradient(grad: np.ndarray, clip_value: float, clip_norm: float) -> np.ndarray:
    """Per-element clip to +-clip_value, then rescale to global L2 norm <= clip_norm."""
    g = np.clip(grad, -clip_value, clip_value)
    norm = float(np.sqrt(np.dot(g, g)))
    if norm > clip_norm:
        g = g * (clip_norm / norm)
    return g


class Adam:
    def __init__(self, size: int):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float):
        self.t += 1
        self.m = ADAM_BETA1 * self.m + (1 - ADAM_BETA1) * grad
        self.v = ADAM_BETA2 * self.v + (1 - ADAM_BETA2) * grad * grad
        m_hat = self.m / (1 - ADAM_BETA1 ** self.t)
        v_hat = self.v / (1 - ADAM_BETA2 ** self.t)
        params -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def loss_and_grad(spec: ModelSpec, params: np.ndarray, X, Y, kind: LossKind,
                  ref: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    net = build_net(spec)
    P = unpack(net, params)
    out, cache = net.forward(P, np.asarray(X, dtype=np.float64), ref)
    value, dout = loss_grad(kind, out, Y)
    return value, pack(net, net.backward(P, cache, dout))


def dataset_loss(spec: ModelSpec, params: np.ndarray, windows: WindowSet, kind: LossKind) -> float:
    net = build_net(spec)
    P = unpack(net, params)
    total, n = 0.0, 0
    for X, Y, ref in windows.iter_batches(EVAL_BATCH):
        out, _ = net.forward(P, X, ref)
        value, _ = loss_grad(kind, out, Y)
        total += value * Y.size
        n += Y.size
    return total / n


def _check_data(spec: ModelSpec, ws: WindowSet, what: str):
    if len(ws) == 0:
        raise InvariantError(f"{what} window set is empty")
    g = ws.geometry
    if g.lookback != spec.lookback or g.horizon != spec.horizon:
        raise GeometryError(
            f"{what} windows are L_b={g.lookback}, L_f={g.horizon}; model expects "
            f"L_b={spec.lookback}, L_f={spec.horizon}")
    if spec.kind != ModelKind.PERSISTENCE and ws.input_dim != spec.input_dim:
        raise ShapeError(f"{what} windows carry {ws.input_dim} readings; model expects {spec.input_dim}")


def train(spec: ModelSpec, train_windows, val_windows, cfg: TrainConfig,
          progress: Callable[[int, float, float], None] | None = None) -> TrainedModel:
    spec.validate()
    cfg.validate()
    if cfg.loss == LossKind.BCEL and spec.output_head != OutputHead.LOGITS:
        raise ConfigError("BCEL trains logits; use output_head=Logits")
    tr = as_window_set(train_windows)
    va = as_window_set(val_windows)
    _check_data(spec, tr, "train")
    _check_data(spec, va, "val")

    params = init_params(spec, child_rng(cfg.seed, 0))
    opt = Adam(params.size)
    best_val, best_params, wait = math.inf, params.copy(), 0
    history: list[tuple[float, float, float]] = []
    n = len(tr)

    for epoch in range(cfg.max_epochs):
        lr = lr_at_epoch(cfg, epoch)
        order = child_rng(cfg.seed, 1, epoch).permutation(n)
        seen, total = 0, 0.0
        for a in range(0, n, cfg.batch):
            X, Y, ref = tr.batch(order[a:a + cfg.batch])
            value, grad = loss_and_grad(spec, params, X, Y, cfg.loss, ref)
            if not math.isfinite(value) or not np.all(np.isfinite(grad)):
                raise TrainingError("non-finite training loss", epoch)
            if params.size:
                opt.step(params, clip_gradient(grad, cfg.clip_value, cfg.clip_norm), lr)
            total += value * len(Y)
            seen += len(Y)
        train_loss = total / seen
        val_loss = dataset_loss(spec, params, va, cfg.loss)
        if not math.isfinite(val_loss):
            raise TrainingError("non-finite validation loss", epoch)
        history.append((train_loss, val_loss, lr))
        log.debug("[train] epoch %d train=%.6g val=%.6g lr=%.3g", epoch, train_loss, val_loss, lr)
        if progress:
            progress(epoch, train_loss, val_loss)

        if val_loss < best_val - cfg.min_delta:
            best_val, best_params, wait = val_loss, params.copy(), 0
        else:
            wait += 1
            if wait >= cfg.patience:
                break

    final = best_params if cfg.restore_best else params
    log.info("[train] %s stopped after %d epochs, best val %.6g", spec.kind.value, len(history), best_val)
    return TrainedModel(spec=spec, params=final, history=history)


def grad_check(spec: ModelSpec, sample, seed: int, loss: LossKind = LossKind.MSE,
               step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients on one sample.

    `sample` is a WindowSample or an (X [L_b, N], y [L_f]) pair. Parameters are drawn
    uniform in [-1, 1] so every unit sits away from saturation and zero. Components where
    both gradients are below 10 x GRAD_FLOOR are skipped: central differences at `step`
    cannot resolve them.
    """
    if isinstance(sample, WindowSample):
        X, Y, ref = sample.lookback, sample.target, np.array([sample.ref_permit])
    else:
        X, Y = sample
        ref = np.array([1.0])
    X = np.asarray(X, dtype=np.float64)[None]
    Y = np.asarray(Y, dtype=np.float64)[None]
    kind = LossKind.parse(loss)
    params = child_rng(seed, 7).uniform(-1.0, 1.0, size=param_count(spec))
    _, analytic = loss_and_grad(spec, params, X, Y, kind, ref)
    worst = 0.0
    for j in range(params.size):
        keep = params[j]
        params[j] = keep + step
        up, _ = loss_and_grad(spec, params, X, Y, kind, ref)
        params[j] = keep - step
        down, _ = loss_and_grad(spec, params, X, Y, kind, ref)
        params[j] = keep
        num = (up - down) / (2 * step)
        a = analytic[j]
        if max(abs(a), abs(num)) < 10 * GRAD_FLOOR:
            continue
        worst = max(worst, abs(a - num) / max(abs(a), abs(num), GRAD_FLOOR))
    return worst

