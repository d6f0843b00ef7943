"""Corpus-scale checks; run with PW_RUN_SLOW=1."""
import time
from collections import Counter

import numpy as np
import pytest

from permitwatch.services.baselines import PermitOracle
from permitwatch.services.bitlabel import bit_label, compare_labelers, learn_bit_patterns
from permitwatch.services.crossval import cross_validate
from permitwatch.services.dataset import Geometry, InstanceKind, InstanceWindows, extract_instances, split_instances
from permitwatch.services.detect import evaluate
from permitwatch.services.features import feature_matrix, instance_features
from permitwatch.services.forest import ForestConfig, classify_forest, train_forest
from permitwatch.services.frame_io import HOUR_FILE_PATTERN
from permitwatch.services.labels import LabelClass
from permitwatch.services.nets import ModelSpec, OutputHead, param_count
from permitwatch.services.replay import replay
from permitwatch.services.sweep import SweepBase, sweep
from permitwatch.services.synth import SynthConfig, default_templates, generate_corpus
from permitwatch.services.training import TrainConfig, TrainedModel, grad_check, train

pytestmark = pytest.mark.slow

GEOM = Geometry(30, 30, 60)


def _corpus(**kw):
    cfg = SynthConfig(**kw)
    cfg.templates = default_templates(cfg)
    frames, truth = generate_corpus(cfg, workers=4)
    names = [HOUR_FILE_PATTERN % h for h in range(len(frames))]
    return frames, truth, extract_instances(frames, names, truth.events, workers=4)


@pytest.fixture(scope="module")
def label_corpus():
    _, truth, insts = _corpus(n_reading=24, n_setting=0, n_status=5, hours=20,
                              outage_rate_per_hour=4.0, fluctuation_rate_per_hour=0.0, seed=21)
    return [i for i in insts if i.kind == InstanceKind.OUTAGE]


@pytest.fixture(scope="module")
def precursor_split():
    # 120 hours in ten-hour chunks; at most one non-outage per file
    insts = []
    for chunk in range(12):
        _, _, part = _corpus(hours=10, outage_rate_per_hour=0.6, fluctuation_rate_per_hour=0.3,
                             abrupt_fraction=0.2, seed=50 + chunk)
        for inst in part:
            inst.id = f"c{chunk:02d}_{inst.id}"
        insts += part
    m = split_instances(insts, [0.7, 0.15, 0.15], seed=5)
    by_id = {i.id: i for i in insts}
    return {s: [by_id[x] for x in m.ids(s)] for s in ("train", "val", "test")}


def test_day_corpus_extraction():
    frames, truth, insts = _corpus(hours=24, outage_rate_per_hour=20 / 24, fluctuation_rate_per_hour=40 / 24,
                                   seed=3)
    assert len(frames[0].catalog) == 64
    assert (len(truth.outages), len(truth.fluctuations)) == (20, 40)
    outages = [i for i in insts if i.kind == InstanceKind.OUTAGE]
    assert sorted(i.global_start + i.drop_offset for i in outages) == sorted(e.start_tick for e in truth.outages)
    per_file = Counter(i.source_file for i in insts if i.kind == InstanceKind.NON_OUTAGE)
    assert all(n == 1 for n in per_file.values())


@pytest.mark.parametrize("kind", ["Linear", "MLP", "LSTM"])
@pytest.mark.parametrize("loss", ["MSE", "MAE", "BCEL"])
def test_gradient_suite(kind, loss):
    head = OutputHead.LOGITS if loss == "BCEL" else OutputHead.RAW
    spec = ModelSpec(kind, input_dim=2, lookback=4, horizon=3, hidden=3, layers=2, output_head=head)
    for seed in range(10):
        rng = np.random.default_rng(seed)
        X = rng.uniform(0.1, 0.5, size=(4, 2)) * rng.choice([-1.0, 1.0], size=(4, 2))
        y = rng.choice([0.0, 1.0], size=3) if loss == "BCEL" else rng.uniform(2.0, 3.0, size=3)
        assert grad_check(spec, (X, y), seed=seed, loss=loss) < 1e-4


def test_lstm_detects_precursor_outages_early(precursor_split):
    n_in = len(precursor_split["train"][0].catalog.reading_indices)
    spec = ModelSpec("LSTM", input_dim=n_in, lookback=30, horizon=60, hidden=25, layers=2, gap=30)
    model = train(spec, InstanceWindows(precursor_split["train"], GEOM), InstanceWindows(precursor_split["val"], GEOM),
                  TrainConfig(seed=1))
    rep = evaluate(model, precursor_split["test"], GEOM, 0.5)
    assert rep.n_precursor >= 5 and rep.n_non_outages >= 10
    assert rep.n_precursor_early >= 0.7 * rep.n_precursor
    assert rep.false_positives <= 0.2 * rep.n_non_outages


def test_gap_trend(precursor_split):
    oracle = SweepBase(geometry=GEOM, threshold=0.5, test=precursor_split["test"], model=PermitOracle())
    cells = sweep("gap", [0, 30, 60], oracle).cells
    assert [c.report["mean_time_diff_s"] for c in cells] == pytest.approx([0.0, -2.0, -4.0])

    n_in = len(precursor_split["train"][0].catalog.reading_indices)
    base = SweepBase(
        geometry=GEOM, threshold=0.5, test=precursor_split["test"],
        spec=ModelSpec("LSTM", input_dim=n_in, lookback=30, horizon=60, hidden=25, layers=2),
        train_cfg=TrainConfig(max_epochs=40, seed=1),
        train_set=precursor_split["train"], val_set=precursor_split["val"],
    )
    early = [c.report["n_early"] for c in sweep("gap", [0, 30, 60], base).cells]
    assert early == sorted(early)


def test_forest_cross_validation(label_corpus):
    assert len(label_corpus) == 80
    X = feature_matrix(label_corpus)
    y = [i.label for i in label_corpus]
    rep = cross_validate(X, y, folds=8, repeats=10, cfg=ForestConfig(seed=2), seed=2)
    assert rep.accuracy_mean >= 0.95 and rep.macro_f1_mean >= 0.90

    forest = train_forest(X, y, ForestConfig(seed=2))
    t0 = time.perf_counter()
    classify_forest(forest, instance_features(label_corpus[0]))
    assert time.perf_counter() - t0 <= 0.1


def test_bit_labeler_coverage_and_consistency(label_corpus):
    table = learn_bit_patterns(label_corpus)
    labels = [bit_label(i, table) for i in label_corpus]
    assert all(b in (i.label, LabelClass.UNLABELED) for b, i in zip(labels, label_corpus))
    assert sum(b != LabelClass.UNLABELED for b in labels) >= 0.9 * len(labels)
    forest = train_forest(feature_matrix(label_corpus), [i.label for i in label_corpus], ForestConfig(seed=4))
    assert compare_labelers(label_corpus, forest, table).diagonal_fraction >= 0.9


def test_realtime_replay_keeps_pace():
    frames, _, _ = _corpus(hours=1, hour_ticks=900, seed=8)
    n_in = len(frames[0].catalog.reading_indices)
    spec = ModelSpec("Linear", input_dim=n_in, lookback=30, horizon=60)
    model = TrainedModel(spec=spec, params=np.random.default_rng(0).normal(scale=0.01, size=param_count(spec)))
    st = replay(frames, model, 0.5, speed=1.0)
    assert st.ticks_processed == 900 - 30 + 1
    assert st.latency_p95_s < 1 / 15 and st.deadline_misses == 0
