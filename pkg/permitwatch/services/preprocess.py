# permitwatch/services/preprocess.py
import numpy as np

from ..errors import InvariantError
from .frames import DeviceKind, HourFrame

SIGMA_FLOOR = 1e-9


def forward_fill(values: np.ndarray) -> np.ndarray:
    """Column-wise forward fill; leading NaNs take the first valid value, all-NaN columns become 0."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise InvariantError(f"expected a 2-D matrix, got shape {v.shape}")
    n, m = v.shape
    valid = ~np.isnan(v)
    rows = np.where(valid, np.arange(n)[:, None], 0)
    np.maximum.accumulate(rows, axis=0, out=rows)
    out = v[rows, np.arange(m)[None, :]]

    has_any = valid.any(axis=0)
    first = np.argmax(valid, axis=0)
    lead = np.arange(n)[:, None] < first[None, :]
    out = np.where(lead, v[first, np.arange(m)][None, :], out)
    out[:, ~has_any] = 0.0
    return out


def zscore_columns(values: np.ndarray, columns: list[int]) -> np.ndarray:
    """Population z-score on the given columns; sigma clamped at SIGMA_FLOOR."""
    out = np.array(values, dtype=np.float64, copy=True)
    if not columns:
        return out
    block = out[:, columns]
    mu = block.mean(axis=0)
    sigma = np.maximum(block.std(axis=0), SIGMA_FLOOR)
    out[:, columns] = (block - mu) / sigma
    return out


def preprocess_frame(frame: HourFrame) -> HourFrame:
    """Forward fill every column, then z-score readings and settings with this file's statistics.

    Permit and status-bit columns are filled only. The result is float64 and NaN-free.
    """
    if frame.n_ticks < 1:
        raise InvariantError("cannot preprocess an empty frame")
    frame.validate()
    cat = frame.catalog
    filled = forward_fill(frame.values)
    scaled = cat.indices(DeviceKind.READING) + cat.indices(DeviceKind.SETTING)
    out = zscore_columns(filled, sorted(scaled))
    return HourFrame(catalog=cat, start_time=frame.start_time, values=out)
