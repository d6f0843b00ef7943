import numpy as np
import pytest

from permitwatch.errors import BoundsError, ConfigError
from permitwatch.services.frame_io import TRUTH_FILE, list_hour_files, load_hour_frame, read_truth
from permitwatch.services.frames import HourFrame
from permitwatch.services.labels import LabelClass
from permitwatch.services.synth import (
    FaultTemplate, PrecursorShape, SynthConfig, build_catalog, default_templates, generate_corpus,
    inject_outage, write_corpus,
)


def _quiet_frame(cfg, n_ticks=900):
    cat = build_catalog(cfg)
    v = np.zeros((n_ticks, len(cat)), dtype=np.float32)
    v[:, cat.permit_indices] = 1.0
    return HourFrame(catalog=cat, start_time=0, values=v)


def test_no_events_means_permit_up_and_empty_truth():
    cfg = SynthConfig(n_reading=3, n_setting=1, n_status=1, hours=1, hour_ticks=3000)
    frames, truth = generate_corpus(cfg)
    assert truth.events == []
    assert np.all(frames[0].values[:, frames[0].catalog.permit_indices] == 1.0)


def test_same_seed_gives_identical_files(tmp_path):
    cfg = SynthConfig(n_reading=6, n_setting=1, n_status=5, hours=2, hour_ticks=9000,
                      outage_rate_per_hour=1.0, fluctuation_rate_per_hour=1.0, seed=5)
    cfg.templates = default_templates(cfg)
    write_corpus(cfg, tmp_path / "a")
    write_corpus(cfg, tmp_path / "b")
    names = [p.name for p in list_hour_files(tmp_path / "a")]
    assert names == ["hour_00000.fhf", "hour_00001.fhf"]
    for n in names + [TRUTH_FILE]:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_parallel_rendering_matches_serial():
    cfg = SynthConfig(n_reading=6, n_setting=1, n_status=5, hours=3, hour_ticks=12000,
                      outage_rate_per_hour=1.0, seed=2)
    cfg.templates = default_templates(cfg)
    serial, t1 = generate_corpus(cfg, workers=1)
    parallel, t2 = generate_corpus(cfg, workers=3)
    assert all(a.bit_equal(b) for a, b in zip(serial, parallel))
    assert [e.to_dict() for e in t1.events] == [e.to_dict() for e in t2.events]


def test_event_counts_follow_rates(small_synth_config):
    _, truth = generate_corpus(small_synth_config)
    assert len(truth.outages) == 12
    assert len(truth.fluctuations) == 30
    abrupt = [e for e in truth.outages if e.precursor_lead_ticks == 0]
    assert len(abrupt) == 3
    assert all(e.raw_label for e in truth.outages)


def test_ramp_precursor_shifts_pre_drop_mean(tmp_path):
    cfg = SynthConfig(n_reading=4, n_setting=0, n_status=1, hours=1, hour_ticks=12000,
                      outage_rate_per_hour=1.0, abrupt_fraction=0.0, seed=3)
    cfg.templates = [FaultTemplate(LabelClass.KRF2, precursor_lead_ticks=60, affected_readings=[1],
                                   precursor_shape=PrecursorShape.RAMP)]
    write_corpus(cfg, tmp_path)
    fr = load_hour_frame(tmp_path / "hour_00000.fhf")
    (ev,) = read_truth(tmp_path / TRUTH_FILE)
    col = fr.values[:, 1].astype(np.float64)
    d = ev.start_tick
    shift = col[d - 60:d].mean() - col[d - 120:d - 60].mean()
    assert shift >= 3 * cfg.noise_amplitude


def test_abrupt_injection_leaves_history_untouched():
    cfg = SynthConfig(n_reading=4, n_setting=0, n_status=1)
    fr = _quiet_frame(cfg)
    fr.values[:, :4] = np.random.default_rng(0).normal(size=(900, 4))
    tpl = FaultTemplate(LabelClass.LRF, precursor_lead_ticks=0, affected_readings=[0, 1])
    out = inject_outage(fr, tpl, 500, np.random.default_rng(1), duration_ticks=200)
    assert np.array_equal(out.values[:500].view(np.uint32), fr.values[:500].view(np.uint32))
    assert np.all(out.values[500:700, out.catalog.permit_indices] == 0.0)


def test_bit_signature_sets_bits_after_drop():
    cfg = SynthConfig(n_reading=7, n_setting=0, n_status=1)
    assert build_catalog(cfg).status_indices == [7]
    tpl = FaultTemplate(LabelClass.KRF1, precursor_lead_ticks=10, affected_readings=[0], bit_signature={7: 0b1000})
    out = inject_outage(_quiet_frame(cfg), tpl, 400, np.random.default_rng(0), duration_ticks=300)
    status = out.values[:, 7].astype(np.int64)
    assert all(status[400 + k] & 0b1000 for k in range(31))
    assert status[399] & 0b1000 == 0


def test_ramp_amplitude_over_lead():
    cfg = SynthConfig(n_reading=4, n_setting=0, n_status=1)
    tpl = FaultTemplate(LabelClass.KRF5, precursor_lead_ticks=45, affected_readings=[2],
                        precursor_amplitude=5.0)
    out = inject_outage(_quiet_frame(cfg), tpl, 600, np.random.default_rng(0), duration_ticks=200)
    assert out.values[599, 2] - out.values[555, 2] == pytest.approx(5.0, abs=1e-5)
    assert out.values[554, 2] == 0.0


def test_inject_out_of_range():
    cfg = SynthConfig(n_reading=4, n_setting=0, n_status=1)
    tpl = FaultTemplate(LabelClass.KRF5, precursor_lead_ticks=45, affected_readings=[2])
    with pytest.raises(BoundsError):
        inject_outage(_quiet_frame(cfg), tpl, 900, np.random.default_rng(0))


def test_infeasible_density_is_a_config_error():
    cfg = SynthConfig(n_reading=6, n_setting=0, n_status=5, hours=1, hour_ticks=6000,
                      outage_rate_per_hour=20.0)
    cfg.templates = default_templates(cfg)
    with pytest.raises(ConfigError):
        generate_corpus(cfg)


def test_hour_ticks_must_fill_whole_seconds():
    with pytest.raises(ConfigError, match="whole number of seconds"):
        SynthConfig(hours=2, hour_ticks=1000).validate()
    SynthConfig(hours=2, hour_ticks=1005).validate()


def test_overlapping_bit_signatures_rejected():
    cfg = SynthConfig(n_reading=4, n_setting=0, n_status=1, outage_rate_per_hour=1.0)
    cfg.templates = [
        FaultTemplate(LabelClass.KRF1, 10, [0], bit_signature={4: 0b11}),
        FaultTemplate(LabelClass.KRF2, 10, [1], bit_signature={4: 0b10}),
    ]
    with pytest.raises(ConfigError):
        cfg.validate()


def test_config_json_round_trip():
    cfg = SynthConfig.from_dict({"n_reading": 10, "n_status": 5, "outage_rate_per_hour": 2,
                                 "templates": "default", "seed": 4})
    assert len(cfg.templates) == 5
    again = SynthConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
