# permitwatch/services/replay.py
"""Online-inference emulation: a producer thread feeds ticks at 15 x speed Hz through a bounded
queue, the consumer keeps a rolling look-back buffer and scores one window per tick.
"""
from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ConfigError, GapError, ShapeError
from .detect import check_threshold, window_score
from .frame_io import list_hour_files, load_hour_frame
from .frames import HourFrame
from .nets import ModelKind
from .preprocess import preprocess_frame
from .training import TrainedModel

log = logging.getLogger(__name__)

QUEUE_CAPACITY = 64
_DONE = object()


@dataclass
class ReplayStats:
    """Counters from one replay run.

    `queue_overflows` counts producer puts that found the queue full; the producer then
    blocks until the consumer drains a slot, so nothing is dropped. `deadline_misses`
    counts scored ticks whose latency exceeded one tick period. Latency runs from the
    moment a tick is emitted, including any time its put spent blocked, so sustained
    overflow shows up as deadline misses once the backlog exceeds one period.
    """

    ticks_received: int = 0
    ticks_processed: int = 0
    alerts: list[tuple[int, float]] = field(default_factory=list)
    latency_p50_s: float = 0.0
    latency_p95_s: float = 0.0
    latency_max_s: float = 0.0
    deadline_misses: int = 0
    queue_overflows: int = 0
    speed: float = 0.0
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alerts"] = [[int(t), float(s)] for t, s in self.alerts]
        d["units"] = {"latency": "s", "alert_tick": "ticks from replay start"}
        return d


class _Producer(threading.Thread):
    def __init__(self, frames, q: queue.Queue, readings: list[int], speed: float, stop: threading.Event):
        super().__init__(name="replay-producer", daemon=True)
        self.frames = frames
        self.q = q
        self.readings = readings
        self.speed = speed
        self.stop = stop
        self.overflows = 0

    def _put(self, item):
        try:
            self.q.put_nowait(item)
        except queue.Full:
            self.overflows += 1
            self.q.put(item)

    def run(self):
        k = 0
        t_start = time.perf_counter()
        prev = None
        try:
            for frame in self.frames:
                if isinstance(frame, (str, Path)):
                    frame = load_hour_frame(frame)
                if prev is not None:
                    expected = prev.start_time + prev.n_ticks / prev.catalog.tick_rate_hz
                    if prev.catalog != frame.catalog or abs(frame.start_time - expected) > 1e-6:
                        raise GapError(f"replay input is not contiguous at {frame.start_time}")
                prev = frame
                period = 1.0 / (frame.catalog.tick_rate_hz * self.speed) if self.speed > 0 else 0.0
                rows = preprocess_frame(frame).values[:, self.readings]
                for row in rows:
                    if self.stop.is_set():
                        return
                    if period:
                        delay = t_start + k * period - time.perf_counter()
                        if delay > 0:
                            time.sleep(delay)
                    self._put((k, row, time.perf_counter()))
                    k += 1
        except Exception as e:  # surfaced by the consumer
            self._put(e)
        finally:
            self._put(_DONE)


def _first_frame(source) -> HourFrame:
    item = source[0]
    return load_hour_frame(item) if isinstance(item, (str, Path)) else item


def replay(source, model: TrainedModel, threshold: float, speed: float = 0.0,
           capacity: int = QUEUE_CAPACITY, stop: threading.Event | None = None) -> ReplayStats:
    """`source` is a directory of hour files or a sequence of raw HourFrames."""
    check_threshold(threshold)
    if speed < 0:
        raise ConfigError("speed must be >= 0 (0 = as fast as possible)")
    if model.spec.kind == ModelKind.PERSISTENCE:
        raise ConfigError("Persistence reads the future permit and cannot run online")
    items: Sequence = list_hour_files(source) if isinstance(source, (str, Path)) else list(source)
    if not items:
        raise ConfigError("nothing to replay")
    first = _first_frame(items)
    readings = first.catalog.reading_indices
    if len(readings) != model.spec.input_dim:
        raise ShapeError(f"model expects {model.spec.input_dim} readings, corpus has {len(readings)}")

    L = model.spec.lookback
    period = 1.0 / first.catalog.tick_rate_hz
    stop = stop or threading.Event()
    q: queue.Queue = queue.Queue(maxsize=capacity)
    producer = _Producer(items, q, readings, speed, stop)
    stats = ReplayStats(speed=speed)
    buf = np.zeros((L, len(readings)))
    latencies = []

    t0 = time.perf_counter()
    producer.start()
    try:
        while True:
            item = q.get()
            if item is _DONE:
                break
            if isinstance(item, Exception):
                raise item
            k, row, emitted = item
            buf[:-1] = buf[1:]
            buf[-1] = row
            stats.ticks_received += 1
            if stats.ticks_received < L:
                continue
            s = window_score(model, buf)
            lat = time.perf_counter() - emitted
            latencies.append(lat)
            stats.ticks_processed += 1
            if lat > period:
                stats.deadline_misses += 1
            if s < threshold:
                stats.alerts.append((k + 1, s))
    finally:
        stop.set()
        while producer.is_alive():
            try:
                q.get_nowait()
            except queue.Empty:
                pass
            producer.join(timeout=0.05)

    stats.queue_overflows = producer.overflows
    stats.wall_time_s = time.perf_counter() - t0
    if latencies:
        lat = np.asarray(latencies)
        stats.latency_p50_s = float(np.percentile(lat, 50))
        stats.latency_p95_s = float(np.percentile(lat, 95))
        stats.latency_max_s = float(lat.max())
    if stats.queue_overflows:
        log.warning("[replay] producer hit a full queue %d times", stats.queue_overflows)
    log.info("[replay] %d ticks, %d inferences, %d alerts, p95 latency %.3g ms, %d deadline misses",
             stats.ticks_received, stats.ticks_processed, len(stats.alerts),
             stats.latency_p95_s * 1e3, stats.deadline_misses)
    return stats
