# permitwatch/services/model_store.py
"""PSM1 model files: b"PSM1", u32 version, u32 header length, JSON header, little-endian f64 params."""
import json
import struct

import numpy as np

from ..errors import FormatError, TruncationError, UnsupportedVersionError
from .nets import ModelSpec, param_count
from .training import TrainedModel

MAGIC = b"PSM1"
VERSION = 1


def encode_model(model: TrainedModel) -> bytes:
    header = json.dumps(
        {"spec": model.spec.to_dict(), "history": [list(h) for h in model.history]},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    return (MAGIC + struct.pack("<II", VERSION, len(header)) + header
            + np.asarray(model.params, dtype="<f8").tobytes())


def decode_model(data: bytes) -> TrainedModel:
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(data[:4])!r}, expected {MAGIC!r}")
    if len(data) < 12:
        raise TruncationError("truncated PSM1 header")
    version, hlen = struct.unpack("<II", data[4:12])
    if version > VERSION:
        raise UnsupportedVersionError(f"PSM version {version} is newer than supported {VERSION}")
    if len(data) < 12 + hlen:
        raise TruncationError("truncated PSM1 header JSON")
    try:
        header = json.loads(data[12:12 + hlen].decode("utf-8"))
        spec = ModelSpec.from_dict(header["spec"])
    except (ValueError, KeyError) as e:
        raise FormatError(f"corrupt PSM1 header: {e}")
    n = param_count(spec)
    body = data[12 + hlen:]
    if len(body) < 8 * n:
        raise TruncationError(f"PSM1 payload holds {len(body) // 8} of {n} parameters")
    if len(body) > 8 * n:
        raise FormatError("trailing bytes after PSM1 parameters")
    params = np.frombuffer(body, dtype="<f8").astype(np.float64)
    history = [tuple(float(x) for x in h) for h in header.get("history") or []]
    return TrainedModel(spec=spec, params=params, history=history)


def save_model(path, model: TrainedModel) -> int:
    payload = encode_model(model)
    with open(path, "wb") as f:
        f.write(payload)
    return len(payload)


def load_model(path) -> TrainedModel:
    with open(path, "rb") as f:
        return decode_model(f.read())
