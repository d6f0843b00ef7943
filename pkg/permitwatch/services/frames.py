# permitwatch/services/frames.py
"""Domain types shared by every stage: device catalog, hour frames, outage events."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from ..errors import InvariantError
from ..settings import MIN_OUTAGE_TICKS, TICK_RATE_HZ
from .labels import LabelClass

STATUS_LIMIT = 2 ** 24  # largest integer a float32 holds exactly


class DeviceKind(IntEnum):
    READING = 0
    SETTING = 1
    STATUS_BITS = 2
    PERMIT = 3


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    kind: DeviceKind


@dataclass(frozen=True)
class DeviceCatalog:
    devices: tuple[DeviceSpec, ...]
    tick_rate_hz: int = TICK_RATE_HZ

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))
        self.validate()

    def validate(self):
        if self.tick_rate_hz <= 0:
            raise InvariantError(f"tick_rate_hz must be > 0, got {self.tick_rate_hz}")
        names = [d.name for d in self.devices]
        if len(set(names)) != len(names):
            raise InvariantError("device names must be unique within a catalog")
        n_permit = sum(1 for d in self.devices if d.kind == DeviceKind.PERMIT)
        if n_permit not in (1, 2):
            raise InvariantError(f"catalog needs one or two permit devices, found {n_permit}")

    def __len__(self) -> int:
        return len(self.devices)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.devices]

    def indices(self, kind: DeviceKind) -> list[int]:
        return [i for i, d in enumerate(self.devices) if d.kind == kind]

    @property
    def reading_indices(self) -> list[int]:
        return self.indices(DeviceKind.READING)

    @property
    def status_indices(self) -> list[int]:
        return self.indices(DeviceKind.STATUS_BITS)

    @property
    def permit_indices(self) -> list[int]:
        return self.indices(DeviceKind.PERMIT)

    @property
    def feature_indices(self) -> list[int]:
        """Every non-permit device (N + D)."""
        return [i for i, d in enumerate(self.devices) if d.kind != DeviceKind.PERMIT]

    def target_permit_index(self, name: str | None = None) -> int:
        permits = self.permit_indices
        if not name:
            return permits[0]
        for i in permits:
            if self.devices[i].name == name:
                return i
        raise InvariantError(f"{name!r} is not a permit device of this catalog")

    def to_dict(self) -> dict:
        return {
            "tick_rate_hz": self.tick_rate_hz,
            "devices": [{"name": d.name, "kind": d.kind.name} for d in self.devices],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceCatalog":
        return cls(
            devices=tuple(DeviceSpec(x["name"], DeviceKind[x["kind"]]) for x in d["devices"]),
            tick_rate_hz=int(d.get("tick_rate_hz", TICK_RATE_HZ)),
        )


@dataclass(eq=False)
class HourFrame:
    catalog: DeviceCatalog
    start_time: int
    values: np.ndarray  # [n_ticks x n_devices] float32, NaN = missing

    @property
    def n_ticks(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_devices(self) -> int:
        return int(self.values.shape[1]) if self.values.ndim == 2 else 0

    def validate(self):
        v = self.values
        if v.ndim != 2 or v.shape[1] != len(self.catalog):
            raise InvariantError(
                f"value matrix {v.shape} does not match a catalog of {len(self.catalog)} devices")
        if v.dtype not in (np.float32, np.float64):
            raise InvariantError(f"values must be float32 (or float64 once preprocessed), got {v.dtype}")
        if self.n_ticks > self.catalog.tick_rate_hz * 3600:
            raise InvariantError(f"{self.n_ticks} ticks exceed one hour at {self.catalog.tick_rate_hz} Hz")
        for j in self.catalog.permit_indices:
            col = v[:, j]
            ok = np.isnan(col) | (col == 0.0) | (col == 1.0)
            if not ok.all():
                raise InvariantError(f"permit column {self.catalog.devices[j].name} holds values outside {{0,1,NaN}}")
        for j in self.catalog.status_indices:
            col = v[:, j]
            col = col[~np.isnan(col)]
            if col.size and ((col < 0).any() or (col >= STATUS_LIMIT).any() or (col != np.floor(col)).any()):
                raise InvariantError(f"status column {self.catalog.devices[j].name} must hold integers in [0, 2^24)")

    def bit_equal(self, other: "HourFrame") -> bool:
        return (
            self.catalog == other.catalog
            and self.start_time == other.start_time
            and self.values.shape == other.values.shape
            and np.array_equal(self.values.view(np.uint32), other.values.view(np.uint32))
        )


@dataclass
class OutageEvent:
    start_tick: int
    duration_ticks: int
    raw_label: str | None = None
    label_class: LabelClass | None = None
    confidence: float | None = None
    # ground-truth extras written by the generator
    precursor_lead_ticks: int | None = None
    affected: list[int] = field(default_factory=list)

    @property
    def is_fluctuation(self) -> bool:
        return self.duration_ticks < MIN_OUTAGE_TICKS

    def to_dict(self) -> dict:
        d = {
            "start_tick": int(self.start_tick),
            "duration_ticks": int(self.duration_ticks),
            "raw_label": self.raw_label,
            "class": self.label_class.value if self.label_class else None,
            "confidence": self.confidence,
        }
        if self.precursor_lead_ticks is not None:
            d["precursor_lead_ticks"] = int(self.precursor_lead_ticks)
            d["affected"] = [int(a) for a in self.affected]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OutageEvent":
        cls_val = d.get("class")
        return cls(
            start_tick=int(d["start_tick"]),
            duration_ticks=int(d["duration_ticks"]),
            raw_label=d.get("raw_label"),
            label_class=LabelClass.parse(cls_val) if cls_val else None,
            confidence=d.get("confidence"),
            precursor_lead_ticks=d.get("precursor_lead_ticks"),
            affected=list(d.get("affected") or []),
        )
