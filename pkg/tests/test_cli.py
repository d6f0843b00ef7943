import json

import pytest

from permitwatch.cli import run_command
from permitwatch.services.synth import SynthConfig, default_templates
from permitwatch.utils import dump_json


def _run(*argv):
    return run_command([str(a) for a in argv])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = SynthConfig(n_reading=10, n_setting=2, n_status=5, hours=4, hour_ticks=54_000,
                      outage_rate_per_hour=3.0, fluctuation_rate_per_hour=7.5, seed=11)
    cfg.templates = default_templates(cfg)
    dump_json(cfg.to_dict(), root / "synth.json")
    assert _run("synth", "--config", root / "synth.json", "--out", root / "corpus") == 0
    assert _run("extract", "--data", root / "corpus", "--out", root / "inst", "--seed", 2) == 0
    return root


def _load(path):
    return json.loads(path.read_text())


def test_synth_is_reproducible(workdir, tmp_path):
    assert _run("synth", "--config", workdir / "synth.json", "--out", tmp_path / "again") == 0
    for f in sorted((workdir / "corpus").glob("hour_*.fhf")):
        assert (tmp_path / "again" / f.name).read_bytes() == f.read_bytes()
    assert _load(workdir / "corpus" / "truth.json")["version"] == 1


def test_extract_writes_manifest(workdir):
    manifest = _load(workdir / "inst" / "manifest.json")
    counts = manifest["counts"]["Outage"]
    assert sum(counts.values()) == 12 and min(counts.values()) >= 1
    assert sorted(manifest["counts"]) == ["NonOutage", "Outage"]


def test_oracle_eval(workdir):
    out = workdir / "oracle.json"
    assert _run("eval", "--model", "oracle", "--instances", workdir / "inst", "--out", out) == 0
    rep = _load(out)
    assert rep["n_detected"] == rep["n_outages"] == rep["n_early"]
    assert rep["mean_time_diff_s"] == pytest.approx(-2.0)
    assert rep["false_positives"] == 0


def test_train_eval_export(workdir):
    model = workdir / "linear.psm"
    assert _run("train", "--model", "linear", "--windows", workdir / "inst", "--out", model,
                "--epochs", 2, "--batch", 512, "--seed", 1) == 0
    assert model.read_bytes()[:4] == b"PSM1"
    rep = workdir / "linear_eval.json"
    assert _run("eval", "--model", model, "--instances", workdir / "inst", "--split", "all", "--out", rep) == 0
    assert _load(rep)["n_outages"] == 12
    assert _run("export", "--report", rep, "--out", workdir / "linear_eval.xlsx") == 0
    assert (workdir / "linear_eval.xlsx").read_bytes()[:2] == b"PK"


def test_threshold_sweep_with_fixed_model(workdir):
    out = workdir / "sweep.json"
    assert _run("sweep", "--kind", "threshold", "--grid", "0.2,0.5,0.8", "--model", "constant:0.5",
                "--instances", workdir / "inst", "--out", out) == 0
    cells = _load(out)["cells"]
    assert [c["params"]["threshold"] for c in cells] == [0.2, 0.5, 0.8]
    assert [c["report"]["n_detected"] > 0 for c in cells] == [False, False, True]


def test_labeling_commands(workdir):
    inst = workdir / "inst"
    forest, table = workdir / "forest.psf", workdir / "bits.json"
    assert _run("label-train", "--instances", inst, "--out", forest, "--trees", 25,
                "--folds", 3, "--cv-report", workdir / "cv.json") == 0
    assert _load(workdir / "cv.json")["folds"] == 3
    assert _run("label-apply", "--forest", forest, "--instances", inst, "--out", workdir / "rf.json") == 0
    rows = _load(workdir / "rf.json")["labels"]
    assert len(rows) == 12 and all(0 < r["confidence"] <= 1 for r in rows)
    assert _run("bitlabel-learn", "--instances", inst, "--out", table) == 0
    assert _run("bitlabel-apply", "--table", table, "--instances", inst, "--out", workdir / "bl.json") == 0
    assert 0.0 <= _load(workdir / "bl.json")["coverage"] <= 1.0
    assert _run("compare-labelers", "--forest", forest, "--table", table, "--instances", inst,
                "--out", workdir / "cmp.json") == 0
    cmp = _load(workdir / "cmp.json")
    assert cmp["total"] == 12 and len(cmp["classes"]) == 6


def test_stats_from_corpus_dir(workdir):
    out = workdir / "stats.json"
    assert _run("stats", "--truth", workdir / "corpus", "--out", out) == 0
    assert _load(out)["n_events"] == 12


def test_usage_and_domain_errors(workdir, capsys):
    assert _run("no-such-command") == 2
    seen = []
    code = run_command(["eval", "--model", "constant:0.5", "--instances", str(workdir / "inst"),
                        "--threshold", "1.5", "--out", str(workdir / "x.json")],
                       on_error=lambda c, m: seen.append(c))
    assert code == 1 and seen == ["config"]
    assert "error [config]" in capsys.readouterr().err
    assert _run("replay", "--data", workdir / "corpus", "--model", workdir / "synth.json",
                "--out", workdir / "r.json") == 1


def test_missing_model_file_is_an_io_error(workdir, capsys):
    seen = []
    code = run_command(["eval", "--model", str(workdir / "nope.psm"), "--instances", str(workdir / "inst"),
                        "--out", str(workdir / "nope.json")],
                       on_error=lambda c, m: seen.append(c))
    assert code == 1 and seen == ["io"]
    assert "error [io]" in capsys.readouterr().err


def test_unknown_template_class_is_a_config_error(workdir, tmp_path, capsys):
    d = _load(workdir / "synth.json")
    d["templates"][0]["label_class"] = "Bogus"
    dump_json(d, tmp_path / "bad.json")
    seen = []
    code = run_command(["synth", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "c")],
                       on_error=lambda c, m: seen.append(c))
    assert code == 1 and seen == ["config"]
    assert "unknown label class" in capsys.readouterr().err
