# permitwatch/services/losses.py
from enum import Enum

import numpy as np

from ..errors import ConfigError, InvariantError
from .nets import sigmoid


class LossKind(str, Enum):
    MSE = "MSE"
    MAE = "MAE"
    BCEL = "BCEL"

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        v = str(value or "").strip().upper()
        try:
            return cls(v)
        except ValueError:
            raise ConfigError(f"unknown loss {value!r}; choose from {[k.value for k in cls]}")


def _check(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise InvariantError(f"prediction shape {p.shape} != target shape {t.shape}")
    if p.size == 0:
        raise InvariantError("loss of empty vectors is undefined")
    return p, t


def loss(kind, pred, target) -> float:
    kind = LossKind.parse(kind)
    p, t = _check(pred, target)
    if kind == LossKind.MSE:
        return float(np.mean((p - t) ** 2))
    if kind == LossKind.MAE:
        return float(np.mean(np.abs(p - t)))
    # softplus-stable BCE on logits
    return float(np.mean(np.maximum(p, 0.0) - p * t + np.log1p(np.exp(-np.abs(p)))))


def loss_grad(kind, pred, target) -> tuple[float, np.ndarray]:
    """Loss value and its gradient w.r.t. `pred` (mean over every element)."""
    kind = LossKind.parse(kind)
    p, t = _check(pred, target)
    n = p.size
    if kind == LossKind.MSE:
        return loss(kind, p, t), 2.0 * (p - t) / n
    if kind == LossKind.MAE:
        return loss(kind, p, t), np.sign(p - t) / n
    return loss(kind, p, t), (sigmoid(p) - t) / n
