import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from permitwatch.services.dataset import Instance, InstanceKind
from permitwatch.services.frames import DeviceCatalog, DeviceKind, DeviceSpec, HourFrame
from permitwatch.services.synth import SynthConfig, default_templates


def pytest_collection_modifyitems(config, items):
    if os.environ.get("PW_RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="slow; set PW_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def make_catalog(n_reading=2, n_setting=0, n_status=0, n_permit=1, rate=15) -> DeviceCatalog:
    devices = [DeviceSpec(f"R{i}", DeviceKind.READING) for i in range(n_reading)]
    devices += [DeviceSpec(f"S{i}", DeviceKind.SETTING) for i in range(n_setting)]
    devices += [DeviceSpec(f"B{i}", DeviceKind.STATUS_BITS) for i in range(n_status)]
    devices += [DeviceSpec(f"P{i}", DeviceKind.PERMIT) for i in range(n_permit)]
    return DeviceCatalog(tuple(devices), tick_rate_hz=rate)


def make_frame(catalog, n_ticks, start_time=0, permit=None, seed=0) -> HourFrame:
    """Noise readings, constant settings/status, permit all up unless given."""
    rng = np.random.default_rng(seed)
    v = np.zeros((n_ticks, len(catalog)), dtype=np.float32)
    v[:, catalog.reading_indices] = rng.normal(size=(n_ticks, len(catalog.reading_indices)))
    for j in catalog.indices(DeviceKind.SETTING):
        v[:, j] = 3.0
    pj = catalog.permit_indices
    v[:, pj] = 1.0 if permit is None else np.asarray(permit, dtype=np.float32)[:, None]
    return HourFrame(catalog=catalog, start_time=start_time, values=v)


def contiguous_frames(catalog, lengths, permit=None, seed=0) -> list[HourFrame]:
    frames, t, pos = [], 0, 0
    for k, n in enumerate(lengths):
        p = None if permit is None else permit[pos:pos + n]
        frames.append(make_frame(catalog, n, start_time=t, permit=p, seed=seed + k))
        t += n // catalog.tick_rate_hz
        pos += n
    return frames


def make_instance(catalog=None, kind=InstanceKind.OUTAGE, drop=450, n_ticks=600, label=None,
                  ticks=None, iid="inst", seed=0) -> Instance:
    catalog = catalog or make_catalog()
    if ticks is None:
        rng = np.random.default_rng(seed)
        ticks = np.zeros((n_ticks, len(catalog)))
        ticks[:, catalog.reading_indices] = rng.normal(size=(n_ticks, len(catalog.reading_indices)))
        ticks[:, catalog.permit_indices] = 1.0
        if kind == InstanceKind.OUTAGE:
            ticks[drop:, catalog.permit_indices] = 0.0
    return Instance(id=iid, kind=kind, catalog=catalog, ticks=ticks,
                    drop_offset=drop if kind == InstanceKind.OUTAGE else None,
                    source_file="f", global_start=0, label=label)


@pytest.fixture
def catalog():
    return make_catalog()


@pytest.fixture
def small_synth_config():
    """Four short-ish hours, one template per class, a handful of outages and fluctuations."""
    cfg = SynthConfig(n_reading=10, n_setting=2, n_status=5, hours=4, hour_ticks=54_000,
                      outage_rate_per_hour=3.0, fluctuation_rate_per_hour=7.5, seed=11)
    cfg.templates = default_templates(cfg)
    return cfg
