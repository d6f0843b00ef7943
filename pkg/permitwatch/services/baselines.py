# permitwatch/services/baselines.py
"""Forecasters scored against instances: trained models plus reference baselines.

Each exposes `instance_scores(instance, geometry)` returning [n_windows x L_f] values in [0, 1].
"""
from __future__ import annotations

import numpy as np

from ..errors import GeometryError
from .dataset import Geometry, Instance, InstanceWindows
from .training import EVAL_BATCH, TrainedModel


class ModelForecaster:
    def __init__(self, model: TrainedModel):
        self.model = model

    @property
    def name(self) -> str:
        return self.model.spec.kind.value

    def check_geometry(self, geometry: Geometry):
        spec = self.model.spec
        if spec.lookback != geometry.lookback or spec.horizon != geometry.horizon:
            raise GeometryError(
                f"model expects L_b={spec.lookback}, L_f={spec.horizon}; got {geometry.to_dict()}")

    def instance_scores(self, instance: Instance, geometry: Geometry) -> np.ndarray:
        self.check_geometry(geometry)
        ws = InstanceWindows([instance], geometry)
        parts = [self.model.scores(X, ref) for X, _, ref in ws.iter_batches(EVAL_BATCH)]
        return np.concatenate(parts)


class PermitOracle:
    """Knows the permit G ticks ahead: every output equals the permit at the first forecast tick."""

    name = "PermitOracle"

    def check_geometry(self, geometry: Geometry):
        geometry.validate()

    def instance_scores(self, instance: Instance, geometry: Geometry) -> np.ndarray:
        n = geometry.n_windows(instance.n_ticks)
        first = np.arange(n) * geometry.stride + geometry.lookback + geometry.gap
        return np.repeat(instance.permit[first][:, None], geometry.horizon, axis=1).astype(np.float64)


class ConstantForecaster:
    def __init__(self, value: float):
        self.value = float(value)

    @property
    def name(self) -> str:
        return f"Constant({self.value:g})"

    def check_geometry(self, geometry: Geometry):
        geometry.validate()

    def instance_scores(self, instance: Instance, geometry: Geometry) -> np.ndarray:
        n = geometry.n_windows(instance.n_ticks)
        return np.full((n, geometry.horizon), np.clip(self.value, 0.0, 1.0))


def as_forecaster(obj):
    if isinstance(obj, TrainedModel):
        return ModelForecaster(obj)
    return obj
