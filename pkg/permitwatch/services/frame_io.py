# permitwatch/services/frame_io.py
"""FHF1 hour-file codec and the ground-truth sidecar.

Layout (little-endian): b"FHF1", u32 version, u32 tick_rate_hz, u64 start_time,
u32 n_devices, u32 n_ticks, device table (u16 name_len, utf-8 name, u8 kind) and a
column-major float32 payload of n_devices x n_ticks.
"""
import io
import os
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from ..errors import FormatError, InvariantError, TruncationError, UnsupportedVersionError
from ..settings import TICK_RATE_HZ
from ..utils import dump_json, load_json
from .frames import DeviceCatalog, DeviceKind, DeviceSpec, HourFrame, OutageEvent

MAGIC = b"FHF1"
VERSION = 1
_HEADER = struct.Struct("<IIQII")

HOUR_FILE_PATTERN = "hour_%05d.fhf"
TRUTH_FILE = "truth.json"


def encode_hour_frame(frame: HourFrame) -> bytes:
    frame.validate()
    if frame.values.dtype != np.float32:
        raise InvariantError(f"FHF1 stores float32 values, got {frame.values.dtype}")
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(_HEADER.pack(VERSION, frame.catalog.tick_rate_hz, int(frame.start_time),
                           frame.n_devices, frame.n_ticks))
    for d in frame.catalog.devices:
        name = d.name.encode("utf-8")
        if len(name) > 0xFFFF:
            raise InvariantError(f"device name too long: {d.name[:40]}...")
        out.write(struct.pack("<H", len(name)))
        out.write(name)
        out.write(struct.pack("<B", int(d.kind)))
    out.write(np.ascontiguousarray(frame.values.T).astype("<f4", copy=False).tobytes())
    return out.getvalue()


def write_hour_frame(frame: HourFrame, destination: BinaryIO) -> int:
    """Serialize `frame`; nothing reaches the sink unless the frame is valid."""
    payload = encode_hour_frame(frame)
    destination.write(payload)
    return len(payload)


def _take(buf: memoryview, pos: int, n: int, what: str) -> tuple[memoryview, int]:
    if pos + n > len(buf):
        raise TruncationError(f"truncated {what}: need {n} bytes at offset {pos}, have {len(buf) - pos}")
    return buf[pos:pos + n], pos + n


def decode_hour_frame(data: bytes) -> HourFrame:
    buf = memoryview(data)
    lead = bytes(buf[:len(MAGIC)])
    if not lead or lead != MAGIC[:len(lead)]:
        raise FormatError(f"bad magic {lead!r}, expected {MAGIC!r}")
    _, pos = _take(buf, 0, len(MAGIC), "magic")
    head, pos = _take(buf, pos, _HEADER.size, "header")
    version, rate, start_time, n_devices, n_ticks = _HEADER.unpack(head)
    if version > VERSION:
        raise UnsupportedVersionError(f"FHF version {version} is newer than supported {VERSION}")
    if version < 1:
        raise FormatError(f"invalid FHF version {version}")

    devices = []
    for _ in range(n_devices):
        raw, pos = _take(buf, pos, 2, "device table")
        (name_len,) = struct.unpack("<H", raw)
        name, pos = _take(buf, pos, name_len, "device name")
        kind_b, pos = _take(buf, pos, 1, "device kind")
        try:
            kind = DeviceKind(kind_b[0])
        except ValueError:
            raise FormatError(f"unknown device kind byte {kind_b[0]}")
        devices.append(DeviceSpec(bytes(name).decode("utf-8"), kind))

    nbytes = 4 * n_devices * n_ticks
    payload, pos = _take(buf, pos, nbytes, "payload")
    cols = np.frombuffer(payload, dtype="<f4").reshape(n_devices, n_ticks)
    values = np.ascontiguousarray(cols.T).astype(np.float32, copy=False)
    try:
        catalog = DeviceCatalog(tuple(devices), tick_rate_hz=rate)
    except InvariantError as e:
        raise FormatError(f"invalid device table: {e}")
    return HourFrame(catalog=catalog, start_time=start_time, values=values)


def read_hour_frame(source: BinaryIO) -> HourFrame:
    return decode_hour_frame(source.read())


def save_hour_frame(path, frame: HourFrame) -> int:
    with open(path, "wb") as f:
        return write_hour_frame(frame, f)


def load_hour_frame(path) -> HourFrame:
    with open(path, "rb") as f:
        return read_hour_frame(f)


def list_hour_files(data_dir) -> list[Path]:
    root = Path(data_dir)
    return sorted(p for p in root.glob("hour_*.fhf") if p.is_file())


def load_corpus(data_dir) -> tuple[list[Path], list[HourFrame]]:
    files = list_hour_files(data_dir)
    return files, [load_hour_frame(p) for p in files]


# ------------------------ ground-truth sidecar ------------------------

def write_truth(path, events: list[OutageEvent], tick_rate_hz: int = TICK_RATE_HZ) -> str:
    ordered = sorted(events, key=lambda e: e.start_tick)
    return dump_json({"tick_rate_hz": tick_rate_hz, "events": [e.to_dict() for e in ordered]}, path)


def read_truth(path) -> list[OutageEvent]:
    if not os.path.exists(path):
        return []
    data = load_json(path)
    rows = data if isinstance(data, list) else (data.get("events") or [])
    return [OutageEvent.from_dict(r) for r in rows]
