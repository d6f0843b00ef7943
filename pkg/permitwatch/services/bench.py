# permitwatch/services/bench.py
"""Computational cost of a model spec: size, parameter count, epoch time and per-instance inference time."""
from __future__ import annotations

import logging
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Sequence

from ..errors import ConfigError, InvariantError
from ..utils import child_rng
from .dataset import Geometry, Instance, InstanceWindows
from .model_store import encode_model
from .nets import ModelSpec, init_params, param_count
from .training import Adam, TrainConfig, TrainedModel, clip_gradient, loss_and_grad

log = logging.getLogger(__name__)


@dataclass
class BenchReport:
    model: str
    model_size_bytes: int
    n_parameters: int
    train_time_per_epoch_s: float
    inference_time_per_instance_s: float
    warmup: int
    repetitions: int

    def to_dict(self) -> dict:
        return {**asdict(self), "units": {"time": "s", "size": "bytes"}}


def _median_time(fn, warmup: int, reps: int) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(statistics.median(times))


def bench(spec: ModelSpec, instances: Sequence[Instance], geometry: Geometry,
          cfg: TrainConfig | None = None, warmup: int = 3, reps: int = 10) -> BenchReport:
    if warmup < 3 or reps < 10:
        raise ConfigError("bench needs warmup >= 3 and reps >= 10")
    if not instances:
        raise InvariantError("bench needs sample instances")
    cfg = cfg or TrainConfig()
    model = TrainedModel(spec=spec, params=init_params(spec, child_rng(cfg.seed, 0)))
    ws = InstanceWindows(instances, geometry)
    one = InstanceWindows(instances[:1], geometry)
    X1, _, ref1 = one.batch(range(len(one)))

    def _epoch():
        params = model.params.copy()
        opt = Adam(params.size)
        for X, Y, ref in ws.iter_batches(cfg.batch):
            _, g = loss_and_grad(spec, params, X, Y, cfg.loss, ref)
            if params.size:
                opt.step(params, clip_gradient(g, cfg.clip_value, cfg.clip_norm), cfg.lr)

    def _infer():
        model.scores(X1, ref1)

    rep = BenchReport(
        model=spec.kind.value,
        model_size_bytes=len(encode_model(model)),
        n_parameters=param_count(spec),
        train_time_per_epoch_s=_median_time(_epoch, warmup, reps),
        inference_time_per_instance_s=_median_time(_infer, warmup, reps),
        warmup=warmup,
        repetitions=reps,
    )
    log.info("[bench] %s: %d params, %.4g s/epoch, %.4g s/instance", rep.model, rep.n_parameters,
             rep.train_time_per_epoch_s, rep.inference_time_per_instance_s)
    return rep
