# permitwatch/services/detect.py
"""Threshold detection on forecasts and the per-instance / per-test-set reports.

The alarm of window i is raised at its look-back end, tick i + L_b. A window alarms when
the minimum of its L_f scores drops below the threshold.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from ..errors import ConfigError, InvariantError
from .dataset import Geometry, Instance, InstanceKind, FrameCorpus
from .frames import HourFrame
from .labels import CLASS_ORDER
from .training import TrainedModel
from .baselines import as_forecaster

log = logging.getLogger(__name__)


class Outcome(str, Enum):
    EARLY = "Early"
    LATE = "Late"
    MISSED = "Missed"


@dataclass
class Detection:
    outcome: Outcome | None          # None for non-outage instances
    time_diff_s: float | None = None
    detect_tick: int | None = None
    false_positive: bool = False
    instance_id: str = ""


def check_threshold(threshold: float):
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must be in (0, 1), got {threshold}")


def first_alarm(scores: np.ndarray, threshold: float) -> int | None:
    """Index of the first window whose minimum score is below the threshold."""
    hits = np.flatnonzero(scores.min(axis=1) < threshold)
    return int(hits[0]) if hits.size else None


def detect_on_instance(model, instance: Instance, geometry: Geometry, threshold: float) -> Detection:
    check_threshold(threshold)
    scores = as_forecaster(model).instance_scores(instance, geometry)
    return _detection(scores, instance, geometry, threshold)


def _detection(scores: np.ndarray, instance: Instance, geometry: Geometry, threshold: float) -> Detection:
    i = first_alarm(scores, threshold)
    tick = None if i is None else i * geometry.stride + geometry.lookback
    if instance.kind == InstanceKind.NON_OUTAGE:
        return Detection(outcome=None, detect_tick=tick, false_positive=tick is not None,
                         instance_id=instance.id)
    if tick is None:
        return Detection(outcome=Outcome.MISSED, instance_id=instance.id)
    rate = instance.catalog.tick_rate_hz
    diff = (tick - instance.drop_offset) / rate
    return Detection(outcome=Outcome.EARLY if diff < 0 else Outcome.LATE, time_diff_s=diff,
                     detect_tick=tick, instance_id=instance.id)


@dataclass
class DetectionReport:
    threshold: float
    geometry: dict
    model: str
    mse_test: float | None = None
    n_outages: int = 0
    n_detected: int = 0
    mean_time_diff_s: float | None = None
    n_early: int = 0
    n_late: int = 0
    false_negatives: int = 0
    n_non_outages: int = 0
    false_positives: int = 0
    n_precursor: int = 0
    n_precursor_early: int = 0
    per_class: dict[str, dict] = field(default_factory=dict)
    detections: list[dict] = field(default_factory=list)

    def check(self):
        if self.n_detected != self.n_early + self.n_late:
            raise InvariantError("n_detected != n_early + n_late")
        if self.n_outages != self.n_detected + self.false_negatives:
            raise InvariantError("n_outages != n_detected + false_negatives")
        if self.false_positives > self.n_non_outages:
            raise InvariantError("false_positives > n_non_outages")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["units"] = {"time_diff": "s", "mse_test": "permit^2"}
        return d


def _one(fc, inst: Instance, geometry: Geometry, threshold: float):
    scores = fc.instance_scores(inst, geometry)
    n = scores.shape[0]
    starts = np.arange(n) * geometry.stride + geometry.lookback + geometry.gap
    targets = np.stack([inst.permit[s:s + geometry.horizon] for s in starts])
    sq = float(np.sum((scores - targets) ** 2))
    return _detection(scores, inst, geometry, threshold), sq, targets.size


def evaluate(model, instances: Sequence[Instance], geometry: Geometry, threshold: float,
             workers: int = 1) -> DetectionReport:
    if not instances:
        raise InvariantError("evaluation needs at least one test instance")
    check_threshold(threshold)
    fc = as_forecaster(model)
    fc.check_geometry(geometry)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(lambda x: _one(fc, x, geometry, threshold), instances))
    else:
        results = [_one(fc, x, geometry, threshold) for x in instances]

    rep = DetectionReport(threshold=threshold, geometry=geometry.to_dict(), model=fc.name)
    sq_total, n_total = 0.0, 0
    diffs = []
    per_class: dict[str, dict] = {}
    for inst, (det, sq, n) in zip(instances, results):
        sq_total += sq
        n_total += n
        rep.detections.append({k: (v.value if isinstance(v, Enum) else v) for k, v in asdict(det).items()})
        if inst.kind == InstanceKind.NON_OUTAGE:
            rep.n_non_outages += 1
            rep.false_positives += int(det.false_positive)
            continue
        rep.n_outages += 1
        if det.outcome == Outcome.MISSED:
            rep.false_negatives += 1
        else:
            rep.n_detected += 1
            diffs.append(det.time_diff_s)
            if det.outcome == Outcome.EARLY:
                rep.n_early += 1
            else:
                rep.n_late += 1
        if inst.precursor_lead_ticks:
            rep.n_precursor += 1
            rep.n_precursor_early += int(det.outcome == Outcome.EARLY)
        if inst.label is not None:
            c = per_class.setdefault(inst.label.value, {"n": 0, "detected": 0, "early": 0})
            c["n"] += 1
            c["detected"] += int(det.outcome != Outcome.MISSED)
            c["early"] += int(det.outcome == Outcome.EARLY)

    rep.mse_test = sq_total / n_total if n_total else None
    rep.mean_time_diff_s = float(np.mean(diffs)) if diffs else None
    order = [c.value for c in CLASS_ORDER]
    for name in sorted(per_class, key=lambda x: order.index(x) if x in order else len(order)):
        c = per_class[name]
        c["detection_rate"] = c["detected"] / c["n"]
        c["early_rate"] = c["early"] / c["n"]
        rep.per_class[name] = c
    rep.check()
    log.info("[eval] %s thr=%.3g: %d/%d detected (%d early), FP %d/%d",
             rep.model, threshold, rep.n_detected, rep.n_outages, rep.n_early,
             rep.false_positives, rep.n_non_outages)
    return rep


# ------------------------ sliding detection over contiguous data ------------------------

def window_score(model: TrainedModel, window: np.ndarray) -> float:
    """Minimum forecast score for one [L_b x N] look-back window."""
    X = np.ascontiguousarray(window, dtype=np.float64)[None]
    return float(model.scores(X).min())


def sliding_alerts(model: TrainedModel, frames: Sequence[HourFrame], threshold: float) -> list[tuple[int, float]]:
    """(alert tick, min score) for every stride-1 window over preprocessed contiguous frames."""
    check_threshold(threshold)
    corpus = FrameCorpus(frames)
    L = model.spec.lookback
    readings = frames[0].catalog.reading_indices
    alerts = []
    for i in range(corpus.total - L + 1):
        win = corpus.slice(i, i + L)[:, readings]
        s = window_score(model, win)
        if s < threshold:
            alerts.append((i + L, s))
    return alerts


def alert_episodes(alert_ticks: Sequence[int]) -> list[tuple[int, int]]:
    """Group consecutive alert ticks into (first, last) episodes."""
    out: list[tuple[int, int]] = []
    for t in alert_ticks:
        if out and t == out[-1][1] + 1:
            out[-1] = (out[-1][0], t)
        else:
            out.append((t, t))
    return out
