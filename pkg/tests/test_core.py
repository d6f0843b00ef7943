import io
import struct

import numpy as np
import pytest

from permitwatch.errors import FormatError, InvariantError, TruncationError, UnsupportedVersionError
from permitwatch.services.frame_io import (
    MAGIC, decode_hour_frame, encode_hour_frame, read_truth, write_hour_frame, write_truth,
)
from permitwatch.services.frames import DeviceCatalog, DeviceKind, DeviceSpec, HourFrame, OutageEvent
from permitwatch.services.labels import LabelClass, OPERATOR_LABELS, canonicalize_label
from permitwatch.services.preprocess import forward_fill, preprocess_frame

from conftest import make_catalog


def _two_device_frame():
    cat = DeviceCatalog((DeviceSpec("R0", DeviceKind.READING), DeviceSpec("P", DeviceKind.PERMIT)))
    v = np.array([[1.5, 1.0], [np.nan, 1.0], [-2.0, 0.0]], dtype=np.float32)
    return HourFrame(catalog=cat, start_time=1234, values=v)


def test_fhf1_layout_and_round_trip():
    fr = _two_device_frame()
    data = encode_hour_frame(fr)
    table = sum(2 + len(d.name) + 1 for d in fr.catalog.devices)
    assert data[:4] == MAGIC
    assert len(data) == 4 + struct.calcsize("<IIQII") + table + 24
    back = decode_hour_frame(data)
    assert back.bit_equal(fr)
    assert np.isnan(back.values[1, 0])


def test_nan_bit_pattern_preserved():
    fr = _two_device_frame()
    fr.values.view(np.uint32)[1, 0] = 0x7FC00123
    back = decode_hour_frame(encode_hour_frame(fr))
    assert back.values[1, 0:1].view(np.uint32)[0] == 0x7FC00123


def test_random_frames_round_trip():
    rng = np.random.default_rng(3)
    for n_read, n_ticks in [(1, 1), (3, 17), (5, 200)]:
        cat = make_catalog(n_reading=n_read, n_status=1)
        v = rng.normal(size=(n_ticks, len(cat))).astype(np.float32)
        v[rng.random(v.shape) < 0.2] = np.nan
        v[:, cat.status_indices] = rng.integers(0, 2 ** 20, size=(n_ticks, 1))
        v[:, cat.permit_indices] = rng.integers(0, 2, size=(n_ticks, 1))
        fr = HourFrame(catalog=cat, start_time=99, values=v)
        assert decode_hour_frame(encode_hour_frame(fr)).bit_equal(fr)


def test_shape_mismatch_writes_nothing():
    fr = _two_device_frame()
    fr.values = np.zeros((3, 3), dtype=np.float32)
    sink = io.BytesIO()
    with pytest.raises(InvariantError):
        write_hour_frame(fr, sink)
    assert sink.getvalue() == b""


def test_decode_errors():
    data = encode_hour_frame(_two_device_frame())
    with pytest.raises(FormatError) as e:
        decode_hour_frame(b"XXXX" + data[4:])
    assert not isinstance(e.value, TruncationError)
    with pytest.raises(TruncationError):
        decode_hour_frame(data[:-4])
    bumped = data[:4] + struct.pack("<I", 2) + data[8:]
    with pytest.raises(UnsupportedVersionError):
        decode_hour_frame(bumped)


def test_error_codes_are_distinct():
    assert {FormatError.code, TruncationError.code, UnsupportedVersionError.code} == {"format", "truncated", "version"}


def test_preprocess_fill_then_zscore():
    cat = make_catalog(n_reading=2)
    v = np.array([[1.0, 1.0, 1.0], [np.nan, 2.0, np.nan], [np.nan, 3.0, 0.0], [4.0, np.nan, 0.0]],
                 dtype=np.float32)
    out = preprocess_frame(HourFrame(catalog=cat, start_time=0, values=v)).values
    np.testing.assert_allclose(out[:, 0], [-0.577, -0.577, -0.577, 1.732], atol=1e-3)
    assert out.dtype == np.float64
    np.testing.assert_array_equal(out[:, 2], [1.0, 1.0, 0.0, 0.0])


def test_zscore_reading_column():
    cat = make_catalog(n_reading=1)
    v = np.array([[1.0, 1.0], [2.0, 1.0], [3.0, 0.0]], dtype=np.float32)
    out = preprocess_frame(HourFrame(catalog=cat, start_time=0, values=v)).values
    np.testing.assert_allclose(out[:, 0], [-1.2247, 0.0, 1.2247], atol=1e-4)
    np.testing.assert_array_equal(out[:, 1], [1.0, 1.0, 0.0])


def test_forward_fill_leading_and_empty_columns():
    v = np.array([[np.nan, np.nan], [2.0, np.nan], [np.nan, np.nan]])
    np.testing.assert_array_equal(forward_fill(v), [[2.0, 0.0], [2.0, 0.0], [2.0, 0.0]])


def test_preprocess_empty_frame():
    cat = make_catalog()
    with pytest.raises(InvariantError):
        preprocess_frame(HourFrame(catalog=cat, start_time=0, values=np.zeros((0, 3), dtype=np.float32)))


def test_status_values_are_not_scaled():
    cat = make_catalog(n_reading=1, n_status=1)
    v = np.array([[0.0, 16.0, 1.0], [1.0, 24.0, 1.0]], dtype=np.float32)
    out = preprocess_frame(HourFrame(catalog=cat, start_time=0, values=v)).values
    np.testing.assert_array_equal(out[:, 1], [16.0, 24.0])


@pytest.mark.parametrize("raw, expected", [
    ("KRF1 CS Fault", LabelClass.KRF1),
    ("L3 ZOV Voltage Trip", LabelClass.LRF),
    ("  l3   zov voltage TRIP ", LabelClass.LRF),
    ("Roof leak on KRF7 PFN", LabelClass.OTHER),
    ("totally novel fault", LabelClass.OTHER),
])
def test_canonicalize_label(raw, expected):
    assert canonicalize_label(raw) == expected


def test_every_operator_label_maps_to_its_class():
    for cls_, raws in OPERATOR_LABELS.items():
        assert all(canonicalize_label(r) == cls_ for r in raws)


def test_truth_sidecar_versioned_and_bare(tmp_path):
    ev = [OutageEvent(900, 300, raw_label="LRF1 trip", label_class=LabelClass.LRF, precursor_lead_ticks=45,
                      affected=[1, 2]), OutageEvent(100, 20)]
    p = tmp_path / "truth.json"
    write_truth(p, ev)
    back = read_truth(p)
    assert [e.start_tick for e in back] == [100, 900]
    assert back[1].label_class == LabelClass.LRF and back[1].precursor_lead_ticks == 45
    assert back[0].is_fluctuation
    assert '"version": 1' in p.read_text()

    bare = tmp_path / "bare.json"
    bare.write_text('[{"start_tick": 5, "duration_ticks": 200, "class": "KRF2"}]')
    assert read_truth(bare)[0].label_class == LabelClass.KRF2
    assert read_truth(tmp_path / "missing.json") == []


def test_catalog_rejects_missing_permit():
    with pytest.raises(InvariantError):
        DeviceCatalog((DeviceSpec("R0", DeviceKind.READING),))
