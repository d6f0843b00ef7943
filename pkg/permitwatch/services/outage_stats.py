# permitwatch/services/outage_stats.py
from typing import Sequence

import numpy as np

from .frames import OutageEvent
from .labels import ALL_CLASSES, LabelClass, canonicalize_label

MIN_DURATION_S = 10.0
MAX_DURATION_S = 3600.0   # one hour file
N_BINS = 12
BIN_EDGES_S = np.geomspace(MIN_DURATION_S, MAX_DURATION_S, N_BINS + 1)


def _class_of(e: OutageEvent) -> LabelClass:
    if e.label_class is not None:
        return e.label_class
    if e.raw_label:
        return canonicalize_label(e.raw_label)
    return LabelClass.UNLABELED


def outage_stats(events: Sequence[OutageEvent], tick_rate_hz: int = 15) -> dict:
    """Per-class outage counts in log-spaced duration bins; durations clamp to [10 s, 60 min]."""
    counts: dict[LabelClass, np.ndarray] = {}
    for e in events:
        if e.is_fluctuation:
            continue
        d = float(np.clip(e.duration_ticks / tick_rate_hz, MIN_DURATION_S, MAX_DURATION_S))
        k = int(np.clip(np.searchsorted(BIN_EDGES_S, d, side="right") - 1, 0, N_BINS - 1))
        counts.setdefault(_class_of(e), np.zeros(N_BINS, dtype=np.int64))[k] += 1
    classes = {c.value: counts[c].tolist() for c in ALL_CLASSES if c in counts}
    return {
        "bin_edges_s": [float(x) for x in BIN_EDGES_S],
        "classes": classes,
        "n_events": int(sum(sum(v) for v in classes.values())),
        "units": {"duration": "s"},
    }
