# permitwatch/services/synth.py
"""Synthetic accelerator telemetry with permit interlock, injected faults and status bits.

Every hour draws its own RNG stream from (seed, hour) and every event from (seed, event),
so hours can be rendered in any order or in parallel with identical bytes.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from ..errors import BoundsError, ConfigError
from ..settings import BIT_WINDOW_TICKS, MIN_OUTAGE_TICKS, PRE_DROP_TICKS, TICK_RATE_HZ, TICKS_PER_HOUR
from ..utils import child_rng, dump_json, load_json
from .frame_io import HOUR_FILE_PATTERN, TRUTH_FILE, save_hour_frame, write_truth
from .frames import DeviceCatalog, DeviceKind, DeviceSpec, HourFrame, OutageEvent
from .labels import CLASS_ORDER, OPERATOR_LABELS, LabelClass

log = logging.getLogger(__name__)

# free ticks kept around every scheduled event so windows never see two events
EVENT_GUARD_TICKS = 600
MAX_PLACEMENT_ATTEMPTS = 2000
OSCILLATION_PERIOD_TICKS = 6


class PrecursorShape(str, Enum):
    RAMP = "Ramp"
    OSCILLATION_GROWTH = "OscillationGrowth"
    STEP_NOISE = "StepNoise"


@dataclass
class FaultTemplate:
    label_class: LabelClass
    precursor_lead_ticks: int
    affected_readings: list[int]
    precursor_shape: PrecursorShape = PrecursorShape.RAMP
    bit_signature: dict[int, int] = field(default_factory=dict)
    min_duration_ticks: int = 225
    max_duration_ticks: int = 2700
    precursor_amplitude: float = 12.0
    trip_amplitude: float = 6.0

    def validate(self):
        if self.precursor_lead_ticks < 0:
            raise ConfigError("precursor_lead_ticks must be >= 0")
        if self.min_duration_ticks < MIN_OUTAGE_TICKS:
            raise ConfigError(f"outage templates need min_duration_ticks >= {MIN_OUTAGE_TICKS}")
        if self.max_duration_ticks < self.min_duration_ticks:
            raise ConfigError("max_duration_ticks < min_duration_ticks")
        if not self.affected_readings:
            raise ConfigError(f"template {self.label_class.value} affects no readings")
        for dev, mask in self.bit_signature.items():
            if mask <= 0 or mask >= 2 ** 24:
                raise ConfigError(f"bit mask {mask} for device {dev} outside (0, 2^24)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["label_class"] = self.label_class.value
        d["precursor_shape"] = self.precursor_shape.value
        d["bit_signature"] = {str(k): int(v) for k, v in self.bit_signature.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FaultTemplate":
        return cls(
            label_class=LabelClass.parse(d.get("label_class") or d.get("class")),
            precursor_lead_ticks=int(d.get("precursor_lead_ticks", 45)),
            affected_readings=[int(x) for x in d.get("affected_readings", [])],
            precursor_shape=PrecursorShape(d.get("precursor_shape", "Ramp")),
            bit_signature={int(k): int(v) for k, v in (d.get("bit_signature") or {}).items()},
            min_duration_ticks=int(d.get("min_duration_ticks", 225)),
            max_duration_ticks=int(d.get("max_duration_ticks", 2700)),
            precursor_amplitude=float(d.get("precursor_amplitude", 12.0)),
            trip_amplitude=float(d.get("trip_amplitude", 6.0)),
        )


@dataclass
class SynthConfig:
    n_reading: int = 48
    n_setting: int = 10
    n_status: int = 5
    n_permit: int = 1
    hours: int = 1
    outage_rate_per_hour: float = 0.0
    fluctuation_rate_per_hour: float = 0.0
    templates: list[FaultTemplate] = field(default_factory=list)
    noise_ar: float = 0.9
    noise_amplitude: float = 1.0
    seed: int = 0
    abrupt_fraction: float = 0.25
    hour_ticks: int = TICKS_PER_HOUR
    start_time: int = 1_714_521_600
    tick_rate_hz: int = TICK_RATE_HZ

    def validate(self):
        if min(self.n_reading, self.n_setting, self.n_status) < 0 or self.n_reading < 1:
            raise ConfigError("need at least one reading and non-negative device counts")
        if self.n_permit not in (1, 2):
            raise ConfigError("n_permit must be 1 or 2")
        if self.hours < 1:
            raise ConfigError("hours must be >= 1")
        if self.outage_rate_per_hour < 0 or self.fluctuation_rate_per_hour < 0:
            raise ConfigError("event rates must be >= 0")
        if not 0.0 <= self.noise_ar < 1.0:
            raise ConfigError("AR(1) coefficient must be in [0, 1)")
        if not 0.0 <= self.abrupt_fraction <= 1.0:
            raise ConfigError("abrupt_fraction must be in [0, 1]")
        if not 0 < self.hour_ticks <= self.tick_rate_hz * 3600:
            raise ConfigError("hour_ticks must be in (0, tick_rate_hz * 3600]")
        if self.hour_ticks % self.tick_rate_hz:
            raise ConfigError(f"hour_ticks {self.hour_ticks} must be a whole number of seconds at {self.tick_rate_hz} Hz")
        if self.outage_rate_per_hour > 0 and not self.templates:
            raise ConfigError("outages requested but no fault templates configured")
        catalog = build_catalog(self)
        readings = set(catalog.reading_indices)
        statuses = set(catalog.status_indices)
        seen: dict[int, int] = {}
        for t in self.templates:
            t.validate()
            bad = [i for i in t.affected_readings if i not in readings]
            if bad:
                raise ConfigError(f"template {t.label_class.value}: {bad} are not reading devices")
            for dev, mask in t.bit_signature.items():
                if dev not in statuses:
                    raise ConfigError(f"template {t.label_class.value}: device {dev} is not a status device")
                if seen.get(dev, 0) & mask:
                    raise ConfigError(f"bit signatures overlap on status device {dev}")
                seen[dev] = seen.get(dev, 0) | mask

    def to_dict(self) -> dict:
        d = asdict(self)
        d["templates"] = [t.to_dict() for t in self.templates]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__ and k != "templates"}
        cfg = cls(**known)
        if d.get("templates") == "default" or d.get("default_templates"):
            cfg.templates = default_templates(cfg)
        else:
            cfg.templates = [FaultTemplate.from_dict(t) for t in (d.get("templates") or [])]
        return cfg

    @classmethod
    def load(cls, path) -> "SynthConfig":
        return cls.from_dict(load_json(path))


@dataclass
class GroundTruth:
    events: list[OutageEvent] = field(default_factory=list)

    def validate(self):
        prev_end = None
        for e in self.events:
            if prev_end is not None and e.start_tick < prev_end:
                raise ConfigError("ground-truth events overlap or are unsorted")
            prev_end = e.start_tick + e.duration_ticks

    @property
    def outages(self) -> list[OutageEvent]:
        return [e for e in self.events if not e.is_fluctuation]

    @property
    def fluctuations(self) -> list[OutageEvent]:
        return [e for e in self.events if e.is_fluctuation]


@dataclass
class _Scheduled:
    index: int
    start: int
    duration: int
    template: FaultTemplate | None = None
    lead: int = 0
    raw_label: str | None = None

    @property
    def end(self) -> int:
        return self.start + self.duration


# ------------------------ catalog & templates ------------------------

def build_catalog(cfg: SynthConfig) -> DeviceCatalog:
    devices = [DeviceSpec(f"R:{i:04d}", DeviceKind.READING) for i in range(cfg.n_reading)]
    devices += [DeviceSpec(f"S:{i:04d}", DeviceKind.SETTING) for i in range(cfg.n_setting)]
    devices += [DeviceSpec(f"B:{i:03d}", DeviceKind.STATUS_BITS) for i in range(cfg.n_status)]
    devices += [DeviceSpec(n, DeviceKind.PERMIT) for n in ("PERMIT:US", "PERMIT:DS")[:cfg.n_permit]]
    return DeviceCatalog(tuple(devices), tick_rate_hz=cfg.tick_rate_hz)


def default_templates(cfg: SynthConfig) -> list[FaultTemplate]:
    """One template per cause class with class-distinct readings and bit signatures."""
    catalog = build_catalog(cfg)
    readings = catalog.reading_indices
    statuses = catalog.status_indices
    n_cls = len(CLASS_ORDER)
    block = max(1, min(4, len(readings) // n_cls))
    shapes = [PrecursorShape.RAMP, PrecursorShape.OSCILLATION_GROWTH, PrecursorShape.STEP_NOISE,
              PrecursorShape.RAMP, PrecursorShape.OSCILLATION_GROWTH]
    leads = [30, 40, 45, 50, 60]
    out = []
    for j, cls_ in enumerate(CLASS_ORDER):
        affected = [readings[(j * block + k) % len(readings)] for k in range(block)]
        sig = {}
        if statuses:
            dev = statuses[j % len(statuses)]
            sig[dev] = 1 << (j // len(statuses))
        out.append(FaultTemplate(
            label_class=cls_,
            precursor_lead_ticks=leads[j],
            affected_readings=affected,
            precursor_shape=shapes[j],
            bit_signature=sig,
            min_duration_ticks=225,
            max_duration_ticks=5400 if cls_ == LabelClass.OTHER else 2700,
            precursor_amplitude=12.0 * cfg.noise_amplitude,
            trip_amplitude=6.0 * cfg.noise_amplitude,
        ))
    return out


def _device_params(cfg: SynthConfig, catalog: DeviceCatalog) -> dict:
    rng = child_rng(cfg.seed, 0, 1)
    n = len(catalog)
    # status baseline words live in bits 16..19, signatures in the low bits
    status_base = (rng.integers(0, 16, size=n) << 16).astype(np.int64)
    return {
        "level": rng.normal(0.0, 10.0, size=n),
        "sin_amp": rng.uniform(0.5, 3.0, size=n) * cfg.noise_amplitude,
        "sin_period": rng.uniform(10 * 60, 60 * 60, size=n) * cfg.tick_rate_hz,
        "sin_phase": rng.uniform(0.0, 2 * math.pi, size=n),
        "status_base": status_base,
    }


# ------------------------ event painting ------------------------

def _precursor_offsets(template: FaultTemplate, lead: int, rng: np.random.Generator) -> np.ndarray:
    """[lead x n_affected] additive disturbance for the ticks drop-lead .. drop-1."""
    n_aff = len(template.affected_readings)
    if lead <= 0:
        return np.zeros((0, n_aff))
    a = template.precursor_amplitude
    k = np.arange(lead, dtype=np.float64)
    u = k / (lead - 1) if lead > 1 else np.ones(1)
    if template.precursor_shape == PrecursorShape.RAMP:
        shape = a * u
        return np.repeat(shape[:, None], n_aff, axis=1)
    if template.precursor_shape == PrecursorShape.OSCILLATION_GROWTH:
        shape = a * u * np.sin(2 * math.pi * k / OSCILLATION_PERIOD_TICKS + math.pi / 2)
        return np.repeat(shape[:, None], n_aff, axis=1)
    step = np.where(k >= lead // 2, a, 0.0)
    return step[:, None] + rng.normal(0.0, a / 4.0, size=(lead, n_aff))


def _paint(values: np.ndarray, t0: int, catalog: DeviceCatalog, ev: _Scheduled,
           offsets: np.ndarray | None):
    """Apply one scheduled event onto `values` (float64, local ticks start at global t0)."""
    n = values.shape[0]

    def _clip(a: int, b: int) -> tuple[int, int]:
        return max(a - t0, 0), min(b - t0, n)

    lo, hi = _clip(ev.start, ev.end)
    if lo < hi:
        values[lo:hi, catalog.permit_indices] = 0.0

    tpl = ev.template
    if tpl is None:
        return

    if ev.lead > 0 and offsets is not None:
        p_lo, p_hi = _clip(ev.start - ev.lead, ev.start)
        if p_lo < p_hi:
            first = (p_lo + t0) - (ev.start - ev.lead)
            seg = offsets[first:first + (p_hi - p_lo)]
            values[p_lo:p_hi, tpl.affected_readings] += seg

    if lo < hi:
        values[lo:hi, tpl.affected_readings] += tpl.trip_amplitude

    b_lo, b_hi = _clip(ev.start, ev.start + BIT_WINDOW_TICKS + 1)
    if b_lo < b_hi:
        for dev, mask in tpl.bit_signature.items():
            col = values[b_lo:b_hi, dev].astype(np.int64)
            values[b_lo:b_hi, dev] = (col | int(mask)).astype(np.float64)


def inject_outage(frame: HourFrame, template: FaultTemplate, drop_tick: int,
                  rng: np.random.Generator, duration_ticks: int | None = None) -> HourFrame:
    """Return a copy of `frame` with one outage of `template` dropping at local `drop_tick`.

    The permit stays down until the end of the frame if the outage outlives it.
    """
    if not 0 <= drop_tick < frame.n_ticks:
        raise BoundsError(f"drop_tick {drop_tick} outside [0, {frame.n_ticks})")
    template.validate()
    if duration_ticks is None:
        duration_ticks = int(rng.integers(template.min_duration_ticks, template.max_duration_ticks + 1))
    lead = min(template.precursor_lead_ticks, drop_tick)
    ev = _Scheduled(index=0, start=drop_tick, duration=duration_ticks, template=template, lead=lead)
    offsets = _precursor_offsets(template, lead, rng)
    values = frame.values.astype(np.float64)
    _paint(values, 0, frame.catalog, ev, offsets)
    return HourFrame(catalog=frame.catalog, start_time=frame.start_time,
                     values=values.astype(frame.values.dtype))


# ------------------------ scheduling ------------------------

def _schedule(cfg: SynthConfig) -> list[_Scheduled]:
    rng = child_rng(cfg.seed, 0, 0)
    total = cfg.hours * cfg.hour_ticks
    n_out = int(round(cfg.outage_rate_per_hour * cfg.hours))
    n_fl = int(round(cfg.fluctuation_rate_per_hour * cfg.hours))

    order = rng.permutation(n_out)
    n_abrupt = int(math.floor(cfg.abrupt_fraction * n_out + 0.5))
    abrupt = set(order[:n_abrupt].tolist())

    plans = []
    for i in range(n_out):
        tpl = cfg.templates[int(order[i]) % len(cfg.templates)]
        dur = int(rng.integers(tpl.min_duration_ticks, tpl.max_duration_ticks + 1))
        lead = 0 if i in abrupt else tpl.precursor_lead_ticks
        raw = OPERATOR_LABELS[tpl.label_class][int(rng.integers(len(OPERATOR_LABELS[tpl.label_class])))] \
            if tpl.label_class in OPERATOR_LABELS else None
        plans.append((dur, tpl, lead, raw))
    for _ in range(n_fl):
        plans.append((int(rng.integers(1, MIN_OUTAGE_TICKS)), None, 0, None))

    taken: list[tuple[int, int]] = []
    placed = []
    lo = PRE_DROP_TICKS + EVENT_GUARD_TICKS // 4
    for dur, tpl, lead, raw in plans:
        hi = total - dur - EVENT_GUARD_TICKS // 4
        if hi <= lo:
            raise ConfigError(f"corpus of {total} ticks too short for an event of {dur} ticks")
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            start = int(rng.integers(lo, hi))
            a, b = start - EVENT_GUARD_TICKS, start + dur + EVENT_GUARD_TICKS
            if all(b <= s or a >= e for s, e in taken):
                taken.append((a, b))
                placed.append((start, dur, tpl, lead, raw))
                break
        else:
            raise ConfigError(
                f"could not place {len(plans)} events in {cfg.hours} h; lower the event rates")

    placed.sort(key=lambda p: p[0])
    return [_Scheduled(index=i, start=s, duration=d, template=t, lead=ld, raw_label=r)
            for i, (s, d, t, ld, r) in enumerate(placed)]


def _render_hour(cfg: SynthConfig, catalog: DeviceCatalog, params: dict,
                 events: list[_Scheduled], offsets: dict[int, np.ndarray], hour: int) -> HourFrame:
    rng = child_rng(cfg.seed, 2, hour)
    n = cfg.hour_ticks
    t0 = hour * cfg.hour_ticks
    t = (t0 + np.arange(n, dtype=np.float64))[:, None]
    values = np.zeros((n, len(catalog)), dtype=np.float64)

    r_idx = catalog.reading_indices
    base = params["level"][r_idx] + params["sin_amp"][r_idx] * np.sin(
        2 * math.pi * t / params["sin_period"][r_idx] + params["sin_phase"][r_idx])
    phi = cfg.noise_ar
    innov = rng.normal(0.0, cfg.noise_amplitude * math.sqrt(1 - phi * phi), size=(n, len(r_idx)))
    noise = np.empty_like(innov)
    noise[0] = rng.normal(0.0, cfg.noise_amplitude, size=len(r_idx))
    for k in range(1, n):
        noise[k] = phi * noise[k - 1] + innov[k]
    values[:, r_idx] = base + noise

    for j in catalog.indices(DeviceKind.SETTING):
        values[:, j] = params["level"][j]
        if rng.random() < 0.1:
            at = int(rng.integers(0, n))
            values[at:, j] += rng.normal(0.0, 1.0)

    for j in catalog.status_indices:
        values[:, j] = float(params["status_base"][j])
    values[:, catalog.permit_indices] = 1.0

    span_lo, span_hi = t0, t0 + n
    for ev in events:
        lead = ev.lead
        if ev.end + BIT_WINDOW_TICKS < span_lo or ev.start - lead >= span_hi:
            continue
        _paint(values, t0, catalog, ev, offsets.get(ev.index))

    return HourFrame(catalog=catalog, start_time=cfg.start_time + (t0 // cfg.tick_rate_hz),
                     values=values.astype(np.float32))


def generate_corpus(cfg: SynthConfig, workers: int = 1) -> tuple[list[HourFrame], GroundTruth]:
    cfg.validate()
    catalog = build_catalog(cfg)
    params = _device_params(cfg, catalog)
    events = _schedule(cfg)
    offsets = {
        ev.index: _precursor_offsets(ev.template, ev.lead, child_rng(cfg.seed, 1, ev.index))
        for ev in events if ev.template is not None and ev.lead > 0
    }
    log.info("[synth] %d hours, %d outages, %d fluctuations, seed=%d",
             cfg.hours, sum(1 for e in events if e.template), sum(1 for e in events if not e.template), cfg.seed)

    def _one(h: int) -> HourFrame:
        fr = _render_hour(cfg, catalog, params, events, offsets, h)
        log.debug("[synth] hour %d rendered", h)
        return fr

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            frames = list(ex.map(_one, range(cfg.hours)))
    else:
        frames = [_one(h) for h in range(cfg.hours)]

    truth = GroundTruth(events=[
        OutageEvent(
            start_tick=ev.start,
            duration_ticks=ev.duration,
            raw_label=ev.raw_label,
            label_class=ev.template.label_class if ev.template else None,
            precursor_lead_ticks=ev.lead,
            affected=list(ev.template.affected_readings) if ev.template else [],
        )
        for ev in events
    ])
    truth.validate()
    return frames, truth


def write_corpus(cfg: SynthConfig, out_dir, workers: int = 1) -> dict:
    """Render the corpus into `out_dir` as hour_%05d.fhf files plus truth.json."""
    os.makedirs(out_dir, exist_ok=True)
    frames, truth = generate_corpus(cfg, workers=workers)
    total_bytes = 0
    for h, fr in enumerate(frames):
        total_bytes += save_hour_frame(Path(out_dir) / (HOUR_FILE_PATTERN % h), fr)
    write_truth(Path(out_dir) / TRUTH_FILE, truth.events, cfg.tick_rate_hz)
    dump_json(cfg.to_dict(), Path(out_dir) / "synth_config.json")
    log.info("[synth] wrote %d files (%d bytes) to %s", len(frames), total_bytes, out_dir)
    return {"files": len(frames), "bytes": total_bytes, "events": len(truth.events),
            "outages": len(truth.outages), "fluctuations": len(truth.fluctuations)}
