# permitwatch/services/sweep.py
"""Sensitivity sweeps over threshold, look-back, gap or loss; one DetectionReport per cell."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

from ..errors import ConfigError, PermitWatchError
from .baselines import as_forecaster
from .dataset import Geometry, Instance, InstanceWindows
from .detect import evaluate
from .losses import LossKind
from .nets import ModelSpec, OutputHead
from .training import TrainConfig, TrainedModel, train

log = logging.getLogger(__name__)

SWEEP_KINDS = ("threshold", "lookback", "gap", "loss")


@dataclass
class SweepBase:
    geometry: Geometry
    threshold: float
    test: Sequence[Instance]
    spec: ModelSpec | None = None
    train_cfg: TrainConfig | None = None
    train_set: Sequence[Instance] = ()
    val_set: Sequence[Instance] = ()
    model: object | None = None      # fixed forecaster (trained model or baseline)


@dataclass
class SweepCell:
    params: dict
    status: str = "done"
    report: dict | None = None
    error: str | None = None
    history: list | None = None


@dataclass
class SweepReport:
    kind: str
    cells: list[SweepCell] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "cells": [c.__dict__ for c in self.cells]}


def _fit(base: SweepBase, spec: ModelSpec, geometry: Geometry, cfg: TrainConfig) -> TrainedModel:
    if not base.train_set or not base.val_set:
        raise ConfigError("retraining sweep cells needs train and val instances")
    tr = InstanceWindows(base.train_set, geometry)
    va = InstanceWindows(base.val_set, geometry)
    return train(spec, tr, va, cfg)


def _cell(kind: str, value, base: SweepBase, fixed) -> SweepCell:
    geometry, threshold = base.geometry, base.threshold
    cell = SweepCell(params={kind: value.value if isinstance(value, LossKind) else value})
    try:
        model = fixed
        if kind == "threshold":
            threshold = float(value)
        else:
            if kind == "lookback":
                geometry = replace(geometry, lookback=int(value))
            elif kind == "gap":
                geometry = replace(geometry, gap=int(value))
            if fixed is None:
                cfg = base.train_cfg or TrainConfig()
                spec = replace(base.spec, lookback=geometry.lookback, gap=geometry.gap)
                if kind == "loss":
                    loss = LossKind.parse(value)
                    cfg = replace(cfg, loss=loss)
                    spec = replace(spec, output_head=OutputHead.LOGITS if loss == LossKind.BCEL else OutputHead.RAW)
                model = _fit(base, spec, geometry, cfg)
                cell.history = [list(h) for h in model.history]
            elif kind == "loss":
                raise ConfigError("a loss sweep needs a trainable model spec")
        cell.report = evaluate(model, base.test, geometry, threshold).to_dict()
    except PermitWatchError as e:
        log.warning("[sweep] %s=%s failed: %s", kind, value, e)
        cell.status, cell.error = "failed", f"{e.code}: {e}"
    return cell


def sweep(kind: str, grid: Sequence, base: SweepBase, workers: int = 1) -> SweepReport:
    if kind not in SWEEP_KINDS:
        raise ConfigError(f"unknown sweep kind {kind!r}; choose from {SWEEP_KINDS}")
    if not grid:
        raise ConfigError("sweep grid is empty")
    if base.model is None and base.spec is None:
        raise ConfigError("sweep needs a model or a model spec")

    fixed = as_forecaster(base.model) if base.model is not None else None
    if kind == "threshold" and fixed is None:
        fixed = as_forecaster(_fit(base, base.spec, base.geometry, base.train_cfg or TrainConfig()))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            cells = list(ex.map(lambda v: _cell(kind, v, base, fixed), grid))
    else:
        cells = [_cell(kind, v, base, fixed) for v in grid]
    log.info("[sweep] %s: %d cells, %d failed", kind, len(cells), sum(c.status == "failed" for c in cells))
    return SweepReport(kind=kind, cells=cells)
