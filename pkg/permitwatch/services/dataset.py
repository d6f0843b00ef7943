# permitwatch/services/dataset.py
"""Outage / non-outage instance extraction, window geometry and train/val/test splits."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from ..errors import ConfigError, GapError, GeometryError, InvariantError
from ..settings import (
    INSTANCE_TICKS, MIN_OUTAGE_TICKS, NON_OUTAGE_CROP_OFFSET, NON_OUTAGE_MIN_RUN_TICKS,
    POST_DROP_TICKS, PRE_DROP_TICKS,
)
from ..utils import stable_key
from .frames import DeviceCatalog, HourFrame, OutageEvent
from .labels import LabelClass, canonicalize_label
from .preprocess import preprocess_frame

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


class InstanceKind(str, Enum):
    OUTAGE = "Outage"
    NON_OUTAGE = "NonOutage"


@dataclass(eq=False)
class Instance:
    id: str
    kind: InstanceKind
    catalog: DeviceCatalog
    ticks: np.ndarray               # [600 x n_devices], preprocessed
    drop_offset: int | None
    source_file: str
    global_start: int
    label: LabelClass | None = None
    raw_label: str | None = None
    permit_index: int | None = None
    precursor_lead_ticks: int | None = None

    def __post_init__(self):
        if self.permit_index is None:
            self.permit_index = self.catalog.target_permit_index()

    @property
    def n_ticks(self) -> int:
        return int(self.ticks.shape[0])

    @property
    def readings(self) -> np.ndarray:
        return self.ticks[:, self.catalog.reading_indices]

    @property
    def permit(self) -> np.ndarray:
        return self.ticks[:, self.permit_index]

    def validate(self):
        p = self.permit
        if self.kind == InstanceKind.OUTAGE:
            d = self.drop_offset
            if d is None or not 0 < d < self.n_ticks or p[d - 1] != 1.0 or p[d] != 0.0:
                raise InvariantError(f"outage instance {self.id} has no permit drop at {d}")
        elif not np.all(p == 1.0):
            raise InvariantError(f"non-outage instance {self.id} has the permit down")


@dataclass(frozen=True)
class Geometry:
    lookback: int
    gap: int
    horizon: int
    stride: int = 1

    @property
    def span(self) -> int:
        return self.lookback + self.gap + self.horizon

    def validate(self, length: int | None = None):
        if self.lookback < 1 or self.horizon < 1 or self.gap < 0 or self.stride < 1:
            raise GeometryError(
                f"need lookback >= 1, gap >= 0, horizon >= 1, stride >= 1; got {self}")
        if length is not None and self.span > length:
            raise GeometryError(f"window span {self.span} exceeds instance length {length}")

    def n_windows(self, length: int) -> int:
        self.validate(length)
        return (length - self.span) // self.stride + 1

    def to_dict(self) -> dict:
        return {"lookback": self.lookback, "gap": self.gap, "horizon": self.horizon, "stride": self.stride}

    @classmethod
    def from_dict(cls, d: dict) -> "Geometry":
        return cls(int(d["lookback"]), int(d["gap"]), int(d["horizon"]), int(d.get("stride", 1)))


@dataclass(eq=False)
class WindowSample:
    lookback: np.ndarray     # [L_b x N] readings only
    target: np.ndarray       # [L_f] permit values from lookback-end + G
    ref_permit: float        # permit at lookback-end + G - 1, read by Persistence only
    geometry: Geometry
    window_start: int = 0
    instance_id: str = ""


# ------------------------ contiguity ------------------------

def check_contiguous(frames: Sequence[HourFrame]):
    for k in range(1, len(frames)):
        prev, cur = frames[k - 1], frames[k]
        if cur.catalog != prev.catalog:
            raise GapError(f"frame {k} uses a different device catalog")
        expected = prev.start_time + prev.n_ticks / prev.catalog.tick_rate_hz
        if abs(cur.start_time - expected) > 1e-6:
            raise GapError(f"frame {k} starts at {cur.start_time}, expected {expected:g}")


class FrameCorpus:
    """Tick-addressable view over a contiguous frame sequence without concatenating it."""

    def __init__(self, frames: Sequence[HourFrame], names: Sequence[str] | None = None):
        check_contiguous(frames)
        self.frames = list(frames)
        self.names = list(names) if names else [f"frame_{k:05d}" for k in range(len(frames))]
        lengths = [f.n_ticks for f in frames]
        self.offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        self.total = int(self.offsets[-1])

    def file_of(self, tick: int) -> int:
        return int(np.searchsorted(self.offsets, tick, side="right") - 1)

    def slice(self, a: int, b: int) -> np.ndarray:
        parts = []
        k = self.file_of(a)
        while a < b:
            lo = a - int(self.offsets[k])
            hi = min(b, int(self.offsets[k + 1])) - int(self.offsets[k])
            parts.append(self.frames[k].values[lo:hi])
            a = int(self.offsets[k]) + hi
            k += 1
        return np.concatenate(parts, axis=0).astype(np.float64, copy=False)

    def column(self, j: int) -> np.ndarray:
        return np.concatenate([f.values[:, j] for f in self.frames]).astype(np.float64, copy=False)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal [start, end) runs where mask is True."""
    m = np.concatenate([[False], mask.astype(bool), [False]])
    edges = np.flatnonzero(m[1:] != m[:-1])
    return list(zip(edges[0::2].tolist(), edges[1::2].tolist()))


# ------------------------ extraction ------------------------

def extract_outage_instances(frames: Sequence[HourFrame], names: Sequence[str] | None = None,
                             truth: Sequence[OutageEvent] | None = None,
                             permit_name: str | None = None) -> list[Instance]:
    """600-tick instances around every permit drop whose down-run lasts >= 150 ticks."""
    if not frames:
        return []
    corpus = FrameCorpus(frames, names)
    catalog = frames[0].catalog
    pj = catalog.target_permit_index(permit_name)
    permit = corpus.column(pj)
    by_start = {e.start_tick: e for e in (truth or [])}

    out = []
    for start, end in _runs(permit == 0.0):
        if start == 0 or permit[start - 1] != 1.0:
            continue
        if end - start < MIN_OUTAGE_TICKS:
            continue
        if start < PRE_DROP_TICKS:
            log.warning("[extract] drop at tick %d is within %d ticks of corpus start; skipped",
                        start, PRE_DROP_TICKS)
            continue
        a = start - PRE_DROP_TICKS
        ticks = corpus.slice(a, start + POST_DROP_TICKS)
        ev = by_start.get(start)
        label, raw, lead = None, None, None
        if ev is not None:
            raw = ev.raw_label
            lead = ev.precursor_lead_ticks
            label = ev.label_class or (canonicalize_label(raw) if raw else None)
        inst = Instance(
            id=f"out_{start:09d}", kind=InstanceKind.OUTAGE, catalog=catalog, ticks=ticks,
            drop_offset=PRE_DROP_TICKS, source_file=corpus.names[corpus.file_of(a)],
            global_start=a, label=label, raw_label=raw, permit_index=pj,
            precursor_lead_ticks=lead,
        )
        inst.validate()
        out.append(inst)
    log.info("[extract] %d outage instances from %d files", len(out), len(frames))
    return out


def extract_nonoutage_instances(frames: Sequence[HourFrame], names: Sequence[str] | None = None,
                                permit_name: str | None = None) -> list[Instance]:
    """At most one 600-tick crop per file, at the 20th minute of its first 30-minute permit-up run."""
    if not frames:
        return []
    corpus = FrameCorpus(frames, names)
    catalog = frames[0].catalog
    pj = catalog.target_permit_index(permit_name)
    out = []
    for k, fr in enumerate(frames):
        col = fr.values[:, pj]
        for start, end in _runs(col == 1.0):
            if end - start < NON_OUTAGE_MIN_RUN_TICKS:
                continue
            a = start + NON_OUTAGE_CROP_OFFSET
            g = int(corpus.offsets[k]) + a
            inst = Instance(
                id=f"non_{g:09d}", kind=InstanceKind.NON_OUTAGE, catalog=catalog,
                ticks=np.asarray(fr.values[a:a + INSTANCE_TICKS], dtype=np.float64),
                drop_offset=None, source_file=corpus.names[k], global_start=g, permit_index=pj,
            )
            inst.validate()
            out.append(inst)
            break
    log.info("[extract] %d non-outage instances from %d files", len(out), len(frames))
    return out


def preprocess_corpus(frames: Sequence[HourFrame], workers: int = 1) -> list[HourFrame]:
    check_contiguous(frames)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(preprocess_frame, frames))
    return [preprocess_frame(f) for f in frames]


def extract_instances(frames: Sequence[HourFrame], names: Sequence[str] | None = None,
                      truth: Sequence[OutageEvent] | None = None, permit_name: str | None = None,
                      workers: int = 1) -> list[Instance]:
    """Preprocess raw frames file by file, then extract both kinds."""
    pre = preprocess_corpus(frames, workers=workers)
    return (extract_outage_instances(pre, names, truth, permit_name)
            + extract_nonoutage_instances(pre, names, permit_name))


# ------------------------ windows ------------------------

def make_windows(instance: Instance, lookback: int, gap: int, horizon: int,
                 stride: int = 1) -> list[WindowSample]:
    geom = Geometry(lookback, gap, horizon, stride)
    n = geom.n_windows(instance.n_ticks)
    readings = instance.readings
    permit = instance.permit
    out = []
    for i in range(n):
        s = i * stride
        t0 = s + lookback + gap
        out.append(WindowSample(
            lookback=readings[s:s + lookback],
            target=permit[t0:t0 + horizon],
            ref_permit=float(permit[t0 - 1]),
            geometry=geom, window_start=s, instance_id=instance.id,
        ))
    return out


class WindowSet:
    """Batchable windows; `batch(idx)` returns (X [B,L_b,N], Y [B,L_f], ref [B])."""

    geometry: Geometry

    def __len__(self) -> int:
        raise NotImplementedError

    def batch(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def input_dim(self) -> int:
        raise NotImplementedError

    def iter_batches(self, size: int) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        n = len(self)
        for a in range(0, n, size):
            yield self.batch(np.arange(a, min(a + size, n)))


class InstanceWindows(WindowSet):
    """Windows addressed as (instance, start) pairs over per-instance arrays."""

    def __init__(self, instances: Sequence[Instance], geometry: Geometry):
        geometry.validate()
        self.geometry = geometry
        self.instances = list(instances)
        self._readings = [np.ascontiguousarray(i.readings) for i in self.instances]
        self._permits = [np.ascontiguousarray(i.permit) for i in self.instances]
        idx = []
        for k, inst in enumerate(self.instances):
            n = geometry.n_windows(inst.n_ticks)
            starts = np.arange(n, dtype=np.int64) * geometry.stride
            idx.append(np.stack([np.full(n, k, dtype=np.int64), starts], axis=1))
        self._index = np.concatenate(idx) if idx else np.zeros((0, 2), dtype=np.int64)

    def __len__(self) -> int:
        return int(self._index.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self._readings[0].shape[1]) if self._readings else 0

    def batch(self, idx):
        g = self.geometry
        rows = self._index[np.asarray(idx, dtype=np.int64)]
        X = np.stack([self._readings[k][s:s + g.lookback] for k, s in rows])
        t0 = rows[:, 1] + g.lookback + g.gap
        Y = np.stack([self._permits[k][t:t + g.horizon] for (k, _), t in zip(rows, t0)])
        ref = np.array([self._permits[k][t - 1] for (k, _), t in zip(rows, t0)])
        return X, Y, ref


class SampleWindows(WindowSet):
    def __init__(self, samples: Sequence[WindowSample]):
        if not samples:
            raise InvariantError("no windows")
        self.geometry = samples[0].geometry
        self._X = np.stack([s.lookback for s in samples]).astype(np.float64)
        self._Y = np.stack([s.target for s in samples]).astype(np.float64)
        self._ref = np.array([s.ref_permit for s in samples], dtype=np.float64)

    def __len__(self) -> int:
        return int(self._X.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self._X.shape[2])

    def batch(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return self._X[idx], self._Y[idx], self._ref[idx]


def as_window_set(windows) -> WindowSet:
    if isinstance(windows, WindowSet):
        return windows
    return SampleWindows(list(windows))


# ------------------------ splits ------------------------

@dataclass
class SplitManifest:
    seed: int
    assignment: dict[str, str] = field(default_factory=dict)
    counts: dict[str, dict[str, int]] = field(default_factory=dict)

    def ids(self, split: str) -> list[str]:
        return [k for k, v in self.assignment.items() if v == split]

    def to_dict(self) -> dict:
        return {"seed": self.seed, "counts": self.counts, "assignment": self.assignment}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitManifest":
        return cls(seed=int(d["seed"]), assignment=dict(d.get("assignment") or {}),
                   counts={k: dict(v) for k, v in (d.get("counts") or {}).items()})


def _allocate(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of n items to the fractions."""
    raw = [f * n for f in fractions]
    base = [int(math.floor(x + 1e-9)) for x in raw]
    rest = n - sum(base)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:rest]:
        base[i] += 1
    return base


def split_instances(instances: Sequence[Instance], fractions: Sequence[float], seed: int) -> SplitManifest:
    """Seeded split with one allocation over all instances.

    Each kind is shuffled on its own and spread evenly over [0, 1); the merged order is cut
    into train, val and test blocks sized by largest remainder on the total count.
    """
    if not instances:
        raise InvariantError("cannot split an empty instance list")
    fractions = [float(f) for f in fractions]
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-6:
        raise ConfigError(f"split fractions must be three non-negative numbers summing to 1, got {fractions}")

    manifest = SplitManifest(seed=int(seed))
    merged = []
    for k, kind in enumerate(InstanceKind):
        ids = sorted((i.id for i in instances if i.kind == kind), key=lambda x: (stable_key(seed, x), x))
        merged += [(Fraction(2 * r + 1, 2 * len(ids)), k, x) for r, x in enumerate(ids)]
        manifest.counts[kind.value] = {split: 0 for split in SPLITS}
    merged.sort()

    kinds = list(InstanceKind)
    pos = 0
    for split, c in zip(SPLITS, _allocate(len(merged), fractions)):
        for _, k, x in merged[pos:pos + c]:
            manifest.assignment[x] = split
            manifest.counts[kinds[k].value][split] += 1
        pos += c
    return manifest
