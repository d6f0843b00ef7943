import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .settings import SCHEMA_VERSION


def child_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent RNG stream for (seed, *keys); same inputs, same stream, any thread."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *[int(k) for k in keys]]))


def stable_key(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def dump_json(obj, path, versioned: bool = True) -> str:
    """Write JSON (dicts get a top-level "version") and return the absolute path."""
    p = Path(path)
    if p.parent and not p.parent.exists():
        os.makedirs(p.parent, exist_ok=True)
    if versioned and isinstance(obj, dict) and "version" not in obj:
        obj = {"version": SCHEMA_VERSION, **obj}
    with open(p, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=False)
        f.write("\n")
    return str(p.resolve())


def load_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def parse_float_list(val) -> list[float]:
    if val is None:
        return []
    if isinstance(val, (list, tuple)):
        return [float(x) for x in val]
    return [float(p) for p in str(val).split(",") if p.strip()]
