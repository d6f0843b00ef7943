import threading

import numpy as np
import pytest

from permitwatch.errors import ConfigError, GapError, ShapeError
from permitwatch.services.detect import sliding_alerts
from permitwatch.services.frame_io import save_hour_frame
from permitwatch.services.nets import ModelSpec, param_count
from permitwatch.services.preprocess import preprocess_frame
from permitwatch.services.replay import replay
from permitwatch.services.training import TrainedModel

from conftest import contiguous_frames, make_catalog, make_frame


def _linear(bias, lb=10, hz=5, n_in=2, seed=4):
    spec = ModelSpec("Linear", input_dim=n_in, lookback=lb, horizon=hz)
    params = np.random.default_rng(seed).normal(scale=0.2, size=param_count(spec))
    params[-hz:] = bias
    return TrainedModel(spec=spec, params=params)


@pytest.fixture
def frames():
    return contiguous_frames(make_catalog(), [150, 150], seed=7)


def test_replay_matches_offline_sliding_windows(frames):
    model = _linear(0.5)
    st = replay(frames, model, 0.5)
    offline = sliding_alerts(model, [preprocess_frame(f) for f in frames], 0.5)
    assert offline
    assert [t for t, _ in st.alerts] == [t for t, _ in offline]
    np.testing.assert_allclose([s for _, s in st.alerts], [s for _, s in offline], atol=1e-9)
    assert st.ticks_received == 300
    assert st.ticks_processed == 300 - 10 + 1


def test_replay_from_directory(tmp_path, frames):
    for k, f in enumerate(frames):
        save_hour_frame(tmp_path / f"hour_{k:05d}.fhf", f)
    st = replay(tmp_path, _linear(0.5), 0.5)
    assert st.alerts == replay(frames, _linear(0.5), 0.5).alerts
    d = st.to_dict()
    assert d["units"]["latency"] == "s"
    assert d["latency_p95_s"] >= d["latency_p50_s"] >= 0


def test_constant_high_model_never_alerts(frames):
    st = replay(frames, _linear(50.0), 0.5)
    assert st.alerts == [] and st.ticks_processed == 291


def test_paced_replay_keeps_up():
    frames = [make_frame(make_catalog(), 60)]
    st = replay(frames, _linear(0.5), 0.5, speed=4.0)
    assert st.ticks_processed == 51
    assert st.wall_time_s >= 59 / (15 * 4.0) * 0.9


def test_replay_rejects_bad_input(frames):
    with pytest.raises(ConfigError):
        replay(frames, TrainedModel(spec=ModelSpec("Persistence", input_dim=2, lookback=10, horizon=5),
                                    params=np.zeros(0)), 0.5)
    with pytest.raises(ShapeError):
        replay(frames, _linear(0.5, n_in=3), 0.5)
    with pytest.raises(ConfigError):
        replay(frames, _linear(0.5), 1.0)
    with pytest.raises(ConfigError):
        replay([], _linear(0.5), 0.5)


def test_replay_stops_on_gap(frames):
    broken = [frames[0], make_frame(frames[0].catalog, 150, start_time=frames[0].start_time + 60)]
    with pytest.raises(GapError):
        replay(broken, _linear(0.5), 0.5)


def test_stop_event_ends_replay_early(frames):
    stop = threading.Event()
    stop.set()
    st = replay(frames, _linear(0.5), 0.5, stop=stop)
    assert st.ticks_received < 300


def test_full_queue_blocks_without_dropping_ticks(frames):
    model = _linear(0.5)
    st = replay(frames, model, 0.5, capacity=1)
    assert st.queue_overflows > 0
    assert st.ticks_received == 300
    assert st.alerts == replay(frames, model, 0.5).alerts
    assert st.deadline_misses <= st.ticks_processed
