# permitwatch/services/labels.py
from enum import Enum

from ..errors import ConfigError


class LabelClass(str, Enum):
    KRF1 = "KRF1"
    KRF2 = "KRF2"
    KRF5 = "KRF5"
    LRF = "LRF"
    OTHER = "Other"
    UNLABELED = "Unlabeled"

    @classmethod
    def parse(cls, value) -> "LabelClass":
        if isinstance(value, cls):
            return value
        v = str(value or "").strip()
        for c in cls:
            if c.value.lower() == v.lower() or c.name.lower() == v.lower():
                return c
        raise ConfigError(f"unknown label class: {value!r}")


# tie-break order for votes; Unlabeled is never voted
CLASS_ORDER = [LabelClass.KRF1, LabelClass.KRF2, LabelClass.KRF5, LabelClass.LRF, LabelClass.OTHER]
ALL_CLASSES = CLASS_ORDER + [LabelClass.UNLABELED]

# operator labels seen in the control-room log, grouped by cause
OPERATOR_LABELS: dict[LabelClass, list[str]] = {
    LabelClass.KRF1: ["KRF1 CS Fault"],
    LabelClass.KRF2: ["KRF2 CS Fault"],
    LabelClass.KRF5: ["KRF5 CS Fault"],
    LabelClass.LRF: [
        "LRF1 FPGA Trip Sum",
        "LRF1 trip",
        "LRF2 Driver Anode OL",
        "LRF2 reverse power",
        "LRF3 FPGA trip",
        "LRF3 FPGA trip sum",
        "L3 O/I Trip",
        "L3 Spark Trip",
        "L3 ZOV Driver trip",
        "L3 ZOV V",
        "L3 ZOV Voltage Trip",
        "L3 ZOV driver voltage",
        "L3 ZOV driver/voltage trip",
        "L4 High Voltage off",
        "L4 VXI reboot",
    ],
    LabelClass.OTHER: [
        "KRF4 Gun Spark",
        "KRF6 CS Fault",
        "KRF6 reflected power fault",
        "L:QPS312 issues",
        "Roof leak on KRF7 PFN",
    ],
}


def _norm(raw: str) -> str:
    return " ".join((raw or "").lower().split())


_LOOKUP = {_norm(raw): cls for cls, raws in OPERATOR_LABELS.items() for raw in raws}


def canonicalize_label(raw: str) -> LabelClass:
    """Map a free-text operator label onto its cause class; anything unknown is Other."""
    return _LOOKUP.get(_norm(raw), LabelClass.OTHER)
