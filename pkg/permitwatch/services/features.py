# permitwatch/services/features.py
import numpy as np

from ..errors import HistoryError
from ..settings import LABEL_LOOKBACK
from .dataset import Instance
from .frames import DeviceCatalog


def aggregate_features(ticks: np.ndarray, t_prime: int, catalog: DeviceCatalog,
                       lookback: int = LABEL_LOOKBACK) -> np.ndarray:
    """Per non-permit device: value at t' minus the mean of the `lookback` ticks before it."""
    if lookback < 1 or t_prime < lookback:
        raise HistoryError(f"need {lookback} ticks before t'={t_prime}")
    if t_prime >= ticks.shape[0]:
        raise HistoryError(f"t'={t_prime} is past the end of {ticks.shape[0]} ticks")
    cols = catalog.feature_indices
    v = np.asarray(ticks, dtype=np.float64)[:, cols]
    return v[t_prime] - v[t_prime - lookback:t_prime].mean(axis=0)


def instance_features(instance: Instance, lookback: int = LABEL_LOOKBACK) -> np.ndarray:
    if instance.drop_offset is None:
        raise HistoryError(f"instance {instance.id} has no drop to aggregate around")
    return aggregate_features(instance.ticks, instance.drop_offset, instance.catalog, lookback)


def feature_matrix(instances, lookback: int = LABEL_LOOKBACK) -> np.ndarray:
    rows = [instance_features(i, lookback) for i in instances]
    return np.stack(rows) if rows else np.zeros((0, 0))
