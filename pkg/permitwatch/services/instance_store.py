# permitwatch/services/instance_store.py
"""On-disk instance store: one FHF1 mini-frame per instance plus instances.json and manifest.json."""
import logging
import os
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..utils import dump_json, load_json
from .dataset import Instance, InstanceKind, SplitManifest
from .frame_io import load_hour_frame, save_hour_frame
from .frames import HourFrame
from .labels import LabelClass

log = logging.getLogger(__name__)

INDEX_FILE = "instances.json"
MANIFEST_FILE = "manifest.json"


def write_instances(out_dir, instances: list[Instance], manifest: SplitManifest | None = None) -> str:
    root = Path(out_dir)
    os.makedirs(root / "inst", exist_ok=True)
    rows = []
    for inst in instances:
        rel = f"inst/{inst.id}.fhf"
        rate = inst.catalog.tick_rate_hz
        frame = HourFrame(catalog=inst.catalog, start_time=inst.global_start // rate,
                          values=inst.ticks.astype(np.float32))
        save_hour_frame(root / rel, frame)
        rows.append({
            "id": inst.id,
            "kind": inst.kind.value,
            "file": rel,
            "drop_offset": inst.drop_offset,
            "source_file": inst.source_file,
            "global_start": int(inst.global_start),
            "label": inst.label.value if inst.label else None,
            "raw_label": inst.raw_label,
            "permit_index": int(inst.permit_index),
            "precursor_lead_ticks": inst.precursor_lead_ticks,
        })
    path = dump_json({"instances": rows}, root / INDEX_FILE)
    if manifest is not None:
        dump_json(manifest.to_dict(), root / MANIFEST_FILE)
    log.info("[extract] stored %d instances in %s", len(rows), root)
    return path


def load_instances(in_dir, split: str | None = None) -> list[Instance]:
    """Load the stored instances, optionally only those the manifest assigns to `split`."""
    root = Path(in_dir)
    index = root / INDEX_FILE
    if not index.exists():
        raise FormatError(f"{index} not found; not an instance store")
    rows = load_json(index).get("instances") or []
    wanted = None
    if split:
        wanted = set(load_manifest(root).ids(split))
    out = []
    for r in rows:
        if wanted is not None and r["id"] not in wanted:
            continue
        fr = load_hour_frame(root / r["file"])
        out.append(Instance(
            id=r["id"],
            kind=InstanceKind(r["kind"]),
            catalog=fr.catalog,
            ticks=fr.values.astype(np.float64),
            drop_offset=r.get("drop_offset"),
            source_file=r.get("source_file") or "",
            global_start=int(r.get("global_start") or 0),
            label=LabelClass.parse(r["label"]) if r.get("label") else None,
            raw_label=r.get("raw_label"),
            permit_index=r.get("permit_index"),
            precursor_lead_ticks=r.get("precursor_lead_ticks"),
        ))
    return out


def load_manifest(in_dir) -> SplitManifest:
    path = Path(in_dir) / MANIFEST_FILE
    if not path.exists():
        raise FormatError(f"{path} not found; run extract with --split")
    return SplitManifest.from_dict(load_json(path))
