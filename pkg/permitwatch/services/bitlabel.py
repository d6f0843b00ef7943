# permitwatch/services/bitlabel.py
"""Rule-based labeler over status-bit flips in the two seconds after a permit drop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import HistoryError
from ..settings import BIT_WINDOW_TICKS
from .dataset import Instance
from .features import instance_features
from .forest import ForestModel, classify_forest
from .labels import ALL_CLASSES, CLASS_ORDER, LabelClass

log = logging.getLogger(__name__)


def flip_mask(status: np.ndarray, t_prime: int, window: int = BIT_WINDOW_TICKS) -> np.ndarray:
    """OR over ticks t'..t'+window of (status XOR status at t'-1), one mask per status column."""
    s = np.asarray(status)
    if s.ndim == 1:
        s = s[:, None]
    if t_prime < 1:
        raise HistoryError("bit flips need the tick before the drop")
    s = s.astype(np.int64)
    seg = s[t_prime:t_prime + window + 1]
    return np.bitwise_or.reduce(seg ^ s[t_prime - 1], axis=0)


def instance_flips(instance: Instance, window: int = BIT_WINDOW_TICKS) -> dict[int, int]:
    """Non-zero flip masks keyed by catalog device index."""
    cols = instance.catalog.status_indices
    if not cols:
        return {}
    masks = flip_mask(instance.ticks[:, cols], instance.drop_offset, window)
    return {c: int(m) for c, m in zip(cols, masks) if m}


@dataclass
class BitPatternTable:
    signatures: dict[LabelClass, list[tuple[int, int]]] = field(default_factory=dict)
    device_names: dict[int, str] = field(default_factory=dict)

    def matches(self, flips: dict[int, int]) -> list[LabelClass]:
        out = []
        for cls_, sig in self.signatures.items():
            if sig and all((flips.get(dev, 0) & mask) == mask for dev, mask in sig):
                out.append(cls_)
        return out

    def to_dict(self) -> dict:
        return {
            "signatures": {
                c.value: [{"device": d, "name": self.device_names.get(d), "mask": m} for d, m in sig]
                for c, sig in self.signatures.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BitPatternTable":
        sigs, names = {}, {}
        for c, rows in (d.get("signatures") or {}).items():
            sigs[LabelClass.parse(c)] = [(int(r["device"]), int(r["mask"])) for r in rows]
            for r in rows:
                if r.get("name"):
                    names[int(r["device"])] = r["name"]
        return cls(signatures=sigs, device_names=names)


def learn_bit_patterns(outages: Sequence[Instance], window: int = BIT_WINDOW_TICKS) -> BitPatternTable:
    """Keep, per class, the flipped bits shared by all its outages and absent from every other class."""
    common: dict[LabelClass, dict[int, int]] = {}
    union: dict[LabelClass, dict[int, int]] = {}
    names: dict[int, str] = {}
    for inst in outages:
        if inst.label is None or inst.label == LabelClass.UNLABELED:
            continue
        flips = instance_flips(inst, window)
        names.update({d: inst.catalog.devices[d].name for d in flips})
        common.setdefault(inst.label, None)
        if not flips:
            continue
        if common[inst.label] is None:
            common[inst.label] = dict(flips)
        else:
            prev = common[inst.label]
            common[inst.label] = {d: prev[d] & m for d, m in flips.items() if d in prev and prev[d] & m}
        u = union.setdefault(inst.label, {})
        for d, m in flips.items():
            u[d] = u.get(d, 0) | m

    table = BitPatternTable(device_names={})
    for cls_, masks in common.items():
        sig = []
        for dev, m in sorted((masks or {}).items()):
            others = 0
            for other, u in union.items():
                if other != cls_:
                    others |= u.get(dev, 0)
            keep = m & ~others
            if keep:
                sig.append((dev, int(keep)))
                table.device_names[dev] = names.get(dev, str(dev))
        table.signatures[cls_] = sig
        if not sig:
            log.warning("[bits] class %s has no discriminating bit pattern; unmatchable", cls_.value)
    ordered = {c: table.signatures[c] for c in CLASS_ORDER if c in table.signatures}
    table.signatures = ordered
    log.info("[bits] learned signatures for %d of %d classes",
             sum(1 for s in ordered.values() if s), len(ordered))
    return table


def bit_label(instance: Instance, table: BitPatternTable, window: int = BIT_WINDOW_TICKS) -> LabelClass:
    hits = table.matches(instance_flips(instance, window))
    return hits[0] if len(hits) == 1 else LabelClass.UNLABELED


@dataclass
class ConsistencyMatrix:
    classes: list[str]
    counts: list[list[int]]        # rows: forest label, columns: bit label
    total: int
    n_jointly_labeled: int
    diagonal_fraction: float

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def compare_labelers(outages: Sequence[Instance], forest: ForestModel, table: BitPatternTable,
                     lookback: int | None = None) -> ConsistencyMatrix:
    """Cross-tabulate forest and bit labels; agreement is measured where the bit labeler commits."""
    classes = list(ALL_CLASSES)
    m = np.zeros((len(classes), len(classes)), dtype=np.int64)
    kwargs = {"lookback": lookback} if lookback else {}
    for inst in outages:
        rf, _ = classify_forest(forest, instance_features(inst, **kwargs))
        bl = bit_label(inst, table)
        m[classes.index(rf), classes.index(bl)] += 1
    unl = classes.index(LabelClass.UNLABELED)
    joint = int(m[:, :unl].sum() + m[:, unl + 1:].sum())
    agree = int(sum(m[i, i] for i in range(len(classes)) if i != unl))
    return ConsistencyMatrix(
        classes=[c.value for c in classes], counts=m.tolist(), total=int(m.sum()),
        n_jointly_labeled=joint, diagonal_fraction=agree / joint if joint else 0.0,
    )
