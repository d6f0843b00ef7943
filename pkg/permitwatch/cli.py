# permitwatch/cli.py
"""Command-line entry point: `python -m permitwatch <command> ...` or `run_command(argv)`."""
from __future__ import annotations

import logging
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from .errors import ConfigError, PermitWatchError
from .settings import GAP, HORIZON, LABEL_LOOKBACK, LOOKBACK, N_ESTIMATORS, THRESHOLD
from .services.runtime import get_runtime_config, resolve_seed
from .utils import dump_json, load_json, parse_float_list

log = logging.getLogger("permitwatch")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str | None = None):
    level = (level or os.environ.get("LOG_LEVEL") or "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT, stream=sys.stderr)


def _workers() -> int:
    return get_runtime_config().workers


def _geometry(lookback, gap, horizon):
    from .services.dataset import Geometry
    g = Geometry(lookback, gap, horizon)
    g.validate()
    return g


def _load_forecaster(ref: str, geometry_defaults: tuple[int, int, int]):
    """PSM1 path, `oracle` or `constant:<v>`; returns (forecaster, geometry)."""
    from .services.baselines import ConstantForecaster, PermitOracle
    from .services.model_store import load_model
    lb, gap, hz = geometry_defaults
    if ref == "oracle":
        return PermitOracle(), _geometry(lb, gap, hz)
    if ref.startswith("constant:"):
        return ConstantForecaster(float(ref.split(":", 1)[1])), _geometry(lb, gap, hz)
    model = load_model(ref)
    s = model.spec
    return model, _geometry(s.lookback, s.gap, s.horizon)


def _outages(instances):
    from .services.dataset import InstanceKind
    return [i for i in instances if i.kind == InstanceKind.OUTAGE]


@click.group()
def cli():
    """Beam-permit outage forecasting, detection and cause labeling."""


# ------------------------ data ------------------------

@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None)
def synth(config_path, out, seed):
    """Generate a synthetic corpus: hour files plus truth.json."""
    from .services.synth import SynthConfig, write_corpus
    cfg = SynthConfig.load(config_path)
    if seed is not None or os.environ.get("PS_SEED"):
        cfg.seed = resolve_seed(seed, cfg.seed)
    info = write_corpus(cfg, out, workers=_workers())
    click.echo(f"wrote {info['files']} hour files, {info['outages']} outages, {info['fluctuations']} fluctuations")


@cli.command()
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--split", "split_str", default="0.7,0.15,0.15", show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--permit", "permit_name", default=None, help="Target permit device (default: first).")
def extract(data, out, split_str, seed, permit_name):
    """Extract outage / non-outage instances and write the split manifest."""
    from .services.dataset import extract_instances, split_instances
    from .services.frame_io import TRUTH_FILE, load_corpus, read_truth
    from .services.instance_store import write_instances
    files, frames = load_corpus(data)
    if not frames:
        raise ConfigError(f"no hour files in {data}")
    truth = read_truth(Path(data) / TRUTH_FILE)
    instances = extract_instances(frames, [p.name for p in files], truth, permit_name, workers=_workers())
    manifest = split_instances(instances, parse_float_list(split_str), resolve_seed(seed))
    write_instances(out, instances, manifest)
    click.echo(f"{len(instances)} instances -> {out} ({manifest.counts})")


# ------------------------ forecasting ------------------------

def _train_options(f):
    for opt in reversed([
        click.option("--lookback", type=int, default=LOOKBACK, show_default=True),
        click.option("--gap", type=int, default=GAP, show_default=True),
        click.option("--horizon", type=int, default=HORIZON, show_default=True),
        click.option("--hidden", type=int, default=None),
        click.option("--layers", type=int, default=2, show_default=True),
        click.option("--loss", type=click.Choice(["MSE", "MAE", "BCEL"], case_sensitive=False), default="MSE"),
        click.option("--epochs", type=int, default=500, show_default=True),
        click.option("--batch", type=int, default=254, show_default=True),
        click.option("--lr", type=float, default=5e-4, show_default=True),
        click.option("--patience", type=int, default=10, show_default=True),
        click.option("--seed", type=int, default=None),
    ]):
        f = opt(f)
    return f


def _spec_and_cfg(kind, n_readings, lookback, gap, horizon, hidden, layers, loss, epochs, batch, lr, patience, seed):
    from .services.losses import LossKind
    from .services.nets import ModelSpec, OutputHead
    from .services.training import TrainConfig
    loss_kind = LossKind.parse(loss)
    spec = ModelSpec(kind=kind, input_dim=n_readings, lookback=lookback, horizon=horizon, hidden=hidden,
                     layers=layers, gap=gap,
                     output_head=OutputHead.LOGITS if loss_kind == LossKind.BCEL else OutputHead.RAW)
    cfg = TrainConfig(lr=lr, batch=batch, max_epochs=epochs, patience=patience, loss=loss_kind,
                      seed=resolve_seed(seed))
    return spec, cfg


@cli.command()
@click.option("--model", "kind", required=True,
              type=click.Choice(["persistence", "linear", "mlp", "lstm"], case_sensitive=False))
@click.option("--windows", required=True, type=click.Path(exists=True, file_okay=False),
              help="Instance store written by `extract`.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_train_options
def train(kind, windows, out, **kw):
    """Train a forecaster on the train/val splits of an instance store."""
    from .services.dataset import InstanceWindows
    from .services.instance_store import load_instances
    from .services.model_store import save_model
    from .services.training import train as fit
    tr = load_instances(windows, "train")
    va = load_instances(windows, "val")
    if not tr or not va:
        raise ConfigError("train and val splits must both be non-empty")
    spec, cfg = _spec_and_cfg(kind, len(tr[0].catalog.reading_indices), **kw)
    geom = _geometry(spec.lookback, spec.gap, spec.horizon)
    model = fit(spec, InstanceWindows(tr, geom), InstanceWindows(va, geom), cfg)
    size = save_model(out, model)
    click.echo(f"{spec.kind.value}: {len(model.history)} epochs, best val "
               f"{min(h[1] for h in model.history):.6g}, {size} bytes -> {out}")


@cli.command("eval")
@click.option("--model", "model_ref", required=True, help="PSM1 file, `oracle` or `constant:<v>`.")
@click.option("--instances", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--threshold", type=float, default=THRESHOLD, show_default=True)
@click.option("--split", default="test", show_default=True, help="Manifest split, or `all`.")
@click.option("--lookback", type=int, default=LOOKBACK, show_default=True)
@click.option("--gap", type=int, default=GAP, show_default=True)
@click.option("--horizon", type=int, default=HORIZON, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def eval_cmd(model_ref, instances, threshold, split, lookback, gap, horizon, out):
    """Detection report (Early / Late / Missed, false positives) on a split."""
    from .services.detect import evaluate
    from .services.instance_store import load_instances
    fc, geom = _load_forecaster(model_ref, (lookback, gap, horizon))
    insts = load_instances(instances, None if split == "all" else split)
    rep = evaluate(fc, insts, geom, threshold, workers=_workers())
    dump_json(rep.to_dict(), out)
    click.echo(f"detected {rep.n_detected}/{rep.n_outages} ({rep.n_early} early), "
               f"FP {rep.false_positives}/{rep.n_non_outages} -> {out}")


@cli.command()
@click.option("--kind", "sweep_kind", required=True, type=click.Choice(["threshold", "lookback", "gap", "loss"]))
@click.option("--grid", required=True, help="Comma-separated values.")
@click.option("--instances", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--model", "model_ref", default=None, help="Fixed model: PSM1 file, `oracle` or `constant:<v>`.")
@click.option("--spec", "spec_kind", default="lstm",
              type=click.Choice(["persistence", "linear", "mlp", "lstm"], case_sensitive=False))
@click.option("--threshold", type=float, default=THRESHOLD, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_train_options
def sweep(sweep_kind, grid, instances, model_ref, spec_kind, threshold, out, **kw):
    """Sensitivity sweep; retrains per cell unless --model is given."""
    from .services.instance_store import load_instances
    from .services.sweep import SweepBase, sweep as run_sweep
    test = load_instances(instances, "test")
    fixed, spec, cfg = None, None, None
    if model_ref:
        fixed, geom = _load_forecaster(model_ref, (kw["lookback"], kw["gap"], kw["horizon"]))
    else:
        geom = _geometry(kw["lookback"], kw["gap"], kw["horizon"])
        spec, cfg = _spec_and_cfg(spec_kind, len(test[0].catalog.reading_indices), **kw)
    values = [v.strip() for v in grid.split(",") if v.strip()]
    if sweep_kind == "threshold":
        values = [float(v) for v in values]
    elif sweep_kind in ("lookback", "gap"):
        values = [int(v) for v in values]
    base = SweepBase(
        geometry=geom, threshold=threshold, test=test, spec=spec, train_cfg=cfg, model=fixed,
        train_set=load_instances(instances, "train") if fixed is None else (),
        val_set=load_instances(instances, "val") if fixed is None else (),
    )
    rep = run_sweep(sweep_kind, values, base, workers=_workers())
    dump_json(rep.to_dict(), out)
    click.echo(f"{len(rep.cells)} cells -> {out}")


@cli.command()
@click.option("--model", "kind", required=True,
              type=click.Choice(["persistence", "linear", "mlp", "lstm"], case_sensitive=False))
@click.option("--instances", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--reps", type=int, default=10, show_default=True)
@click.option("--warmup", type=int, default=3, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_train_options
def bench(kind, instances, reps, warmup, out, **kw):
    """Model size, parameter count and timing on sample instances."""
    from .services.bench import bench as run_bench
    from .services.instance_store import load_instances
    insts = load_instances(instances)
    spec, cfg = _spec_and_cfg(kind, len(insts[0].catalog.reading_indices), **kw)
    rep = run_bench(spec, insts[:4], _geometry(spec.lookback, spec.gap, spec.horizon), cfg,
                    warmup=warmup, reps=reps)
    dump_json(rep.to_dict(), out)
    click.echo(f"{rep.n_parameters} parameters, {rep.inference_time_per_instance_s:.4g} s/instance -> {out}")


# ------------------------ labeling ------------------------

@cli.command("label-train")
@click.option("--instances", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--cv-report", default=None, type=click.Path(dir_okay=False))
@click.option("--folds", type=int, default=8, show_default=True)
@click.option("--repeats", type=int, default=1, show_default=True)
@click.option("--trees", type=int, default=N_ESTIMATORS, show_default=True)
@click.option("--lookback", type=int, default=LABEL_LOOKBACK, show_default=True)
@click.option("--seed", type=int, default=None)
def label_train(instances, out, cv_report, folds, repeats, trees, lookback, seed):
    """Train the forest labeler on labeled outages (optionally cross-validate first)."""
    from .services.crossval import cross_validate
    from .services.features import feature_matrix, instance_features
    from .services.forest import ForestConfig, classify_forest, save_forest, train_forest
    from .services.instance_store import load_instances
    labeled = [i for i in _outages(load_instances(instances)) if i.label is not None]
    if not labeled:
        raise ConfigError("no labeled outages in the instance store")
    X = feature_matrix(labeled, lookback)
    y = [i.label for i in labeled]
    cfg = ForestConfig(n_estimators=trees, seed=resolve_seed(seed), workers=_workers())
    forest = train_forest(X, y, cfg)
    save_forest(out, forest)
    if cv_report:
        rep = cross_validate(X, y, folds=folds, repeats=repeats, cfg=cfg, seed=cfg.seed)
        t0 = time.perf_counter()
        classify_forest(forest, instance_features(labeled[0], lookback))
        rep.inference_time_s = time.perf_counter() - t0
        dump_json(rep.to_dict(), cv_report)
        click.echo(f"cv accuracy {rep.accuracy_mean:.3f}±{rep.accuracy_std:.3f}, "
                   f"macro-F1 {rep.macro_f1_mean:.3f}±{rep.macro_f1_std:.3f}")
    click.echo(f"{len(forest.trees)} trees over {len(labeled)} outages -> {out}")


@cli.command("label-apply")
@click.option("--forest", "forest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--instances", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--lookback", type=int, default=LABEL_LOOKBACK, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def label_apply(forest_path, instances, lookback, out):
    """Label every outage with (class, confidence)."""
    from .services.features import instance_features
    from .services.forest import classify_forest, load_forest
    from .services.instance_store import load_instances
    forest = load_forest(forest_path)
    rows = []
    for inst in _outages(load_instances(instances)):
        cls_, conf = classify_forest(forest, instance_features(inst, lookback))
        rows.append({"id": inst.id, "label": cls_.value, "confidence": conf,
                     "operator_label": inst.label.value if inst.label else None})
    dump_json({"labels": rows}, out)
    click.echo(f"labeled {len(rows)} outages -> {out}")


@cli.command("bitlabel-learn")
@click.option("--instances", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def bitlabel_learn(instances, out):
    """Learn per-class status-bit signatures from labeled outages."""
    from .services.bitlabel import learn_bit_patterns
    from .services.instance_store import load_instances
    table = learn_bit_patterns(_outages(load_instances(instances)))
    dump_json(table.to_dict(), out)
    click.echo(f"signatures for {sum(1 for s in table.signatures.values() if s)} classes -> {out}")


@cli.command("bitlabel-apply")
@click.option("--table", "table_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--instances", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def bitlabel_apply(table_path, instances, out):
    """Label outages by bit-flip signature; ambiguous or unmatched ones stay Unlabeled."""
    from .services.bitlabel import BitPatternTable, bit_label
    from .services.instance_store import load_instances
    from .services.labels import LabelClass
    table = BitPatternTable.from_dict(load_json(table_path))
    rows = [{"id": i.id, "label": bit_label(i, table).value} for i in _outages(load_instances(instances))]
    covered = sum(r["label"] != LabelClass.UNLABELED.value for r in rows)
    dump_json({"labels": rows, "coverage": covered / len(rows) if rows else 0.0}, out)
    click.echo(f"bit-labeled {covered}/{len(rows)} outages -> {out}")


@cli.command("compare-labelers")
@click.option("--forest", "forest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--table", "table_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--instances", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def compare_labelers_cmd(forest_path, table_path, instances, out):
    """Cross-tabulate forest and bit labels."""
    from .services.bitlabel import BitPatternTable, compare_labelers
    from .services.forest import load_forest
    from .services.instance_store import load_instances
    m = compare_labelers(_outages(load_instances(instances)), load_forest(forest_path),
                         BitPatternTable.from_dict(load_json(table_path)))
    dump_json(m.to_dict(), out)
    click.echo(f"diagonal fraction {m.diagonal_fraction:.3f} over {m.n_jointly_labeled} outages -> {out}")


# ------------------------ reporting ------------------------

@cli.command()
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True),
              help="truth.json or a corpus directory holding one.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def stats(truth_path, out):
    """Per-class outage-duration histogram."""
    from .services.frame_io import TRUTH_FILE, read_truth
    from .services.outage_stats import outage_stats
    p = Path(truth_path)
    events = read_truth(p / TRUTH_FILE if p.is_dir() else p)
    dump_json(outage_stats(events), out)
    click.echo(f"{len(events)} events -> {out}")


@cli.command()
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--threshold", type=float, default=THRESHOLD, show_default=True)
@click.option("--speed", type=float, default=0.0, show_default=True, help="0 = as fast as possible.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def replay(data, model_path, threshold, speed, out):
    """Stream hour files through the model as if live."""
    from .services.model_store import load_model
    from .services.replay import replay as run_replay
    st = run_replay(data, load_model(model_path), threshold, speed)
    dump_json(st.to_dict(), out)
    click.echo(f"{st.ticks_processed} inferences, {len(st.alerts)} alerts, "
               f"p95 {st.latency_p95_s * 1e3:.2f} ms, {st.deadline_misses} misses -> {out}")


@cli.command()
@click.option("--report", "report_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def export(report_path, out):
    """Export a JSON report to XLSX."""
    from .services.export import export_report
    export_report(load_json(report_path), out)
    click.echo(f"-> {out}")


# ------------------------ entry points ------------------------

def run_command(argv: list[str], on_error=None) -> int:
    """Run one CLI invocation; 0 ok, 1 domain or I/O error, 2 usage error.

    `on_error(code, message)` is called before a non-zero return.
    """
    report = on_error or (lambda code, message: None)
    try:
        cli.main(args=list(argv), prog_name="permitwatch", standalone_mode=False)
        return 0
    except click.exceptions.Exit as e:
        return int(e.exit_code or 0)
    except click.UsageError as e:
        e.show(file=sys.stderr)
        report("usage", e.format_message())
        return 2
    except click.ClickException as e:
        e.show(file=sys.stderr)
        report("usage", e.format_message())
        return 1
    except PermitWatchError as e:
        click.echo(f"error [{e.code}]: {e}", err=True)
        log.debug("command failed", exc_info=True)
        report(e.code, str(e))
        return 1
    except OSError as e:
        click.echo(f"error [io]: {e}", err=True)
        report("io", str(e))
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        report("aborted", "aborted")
        return 1


def main():
    configure_logging()
    np.seterr(over="ignore", under="ignore")
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
