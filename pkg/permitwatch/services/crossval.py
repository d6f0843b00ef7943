# permitwatch/services/crossval.py
"""Repeated stratified k-fold cross-validation of the forest labeler."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from ..errors import ConfigError
from ..utils import child_rng
from .forest import ForestConfig, classify_forest, train_forest
from .labels import ALL_CLASSES, LabelClass

log = logging.getLogger(__name__)


def _ordered(labels) -> list[LabelClass]:
    present = set(labels)
    return [c for c in ALL_CLASSES if c in present]


def confusion_matrix(y_true: Sequence[LabelClass], y_pred: Sequence[LabelClass],
                     classes: Sequence[LabelClass]) -> np.ndarray:
    """Rows are true classes, columns predicted."""
    pos = {c: i for i, c in enumerate(classes)}
    m = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        m[pos[t], pos[p]] += 1
    return m


def macro_f1(y_true: Sequence[LabelClass], y_pred: Sequence[LabelClass]) -> float:
    """Unweighted mean F1 over every label seen in either sequence; 0/0 counts as 0."""
    classes = _ordered(list(y_true) + list(y_pred))
    if not classes:
        return 0.0
    m = confusion_matrix(y_true, y_pred, classes)
    tp = np.diag(m).astype(np.float64)
    fp = m.sum(axis=0) - tp
    fn = m.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(f1.mean())


def stratified_folds(labels: Sequence[LabelClass], folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold index per sample: shuffle within each class, then deal round-robin across classes."""
    fold_of = np.empty(len(labels), dtype=np.int64)
    pos = 0
    arr = np.array([l.value for l in labels])
    for c in _ordered(labels):
        idx = np.flatnonzero(arr == c.value)
        for i in rng.permutation(idx):
            fold_of[i] = pos % folds
            pos += 1
    return fold_of


@dataclass
class CVReport:
    folds: int
    repeats: int
    accuracy_mean: float
    accuracy_std: float
    macro_f1_mean: float
    macro_f1_std: float
    classes: list[str]
    confusion: list[list[int]]
    accuracy_per_repeat: list[float] = field(default_factory=list)
    macro_f1_per_repeat: list[float] = field(default_factory=list)
    inference_time_s: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def cross_validate(features, labels: Sequence[LabelClass], folds: int = 8, repeats: int = 1,
                   cfg: ForestConfig | None = None, seed: int = 0) -> CVReport:
    X = np.asarray(features, dtype=np.float64)
    labels = [LabelClass.parse(l) for l in labels]
    n = len(labels)
    if folds < 2:
        raise ConfigError("need at least 2 folds")
    if folds > n:
        raise ConfigError(f"{folds} folds for {n} samples")
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    cfg = cfg or ForestConfig()
    classes = _ordered(labels)

    accs, f1s = [], []
    pooled = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for r in range(repeats):
        fold_of = stratified_folds(labels, folds, child_rng(seed, r))
        preds: list[LabelClass | None] = [None] * n
        for k in range(folds):
            test = np.flatnonzero(fold_of == k)
            train = np.flatnonzero(fold_of != k)
            forest = train_forest(X[train], [labels[i] for i in train],
                                  replace(cfg, seed=int(child_rng(seed, r, k).integers(2**31))))
            for i in test:
                preds[i] = classify_forest(forest, X[i])[0]
        accs.append(float(np.mean([p == t for p, t in zip(preds, labels)])))
        f1s.append(macro_f1(labels, preds))
        pooled += confusion_matrix(labels, preds, classes)
        log.debug("[forest] cv repeat %d: acc=%.4f macro-f1=%.4f", r, accs[-1], f1s[-1])

    rep = CVReport(
        folds=folds, repeats=repeats,
        accuracy_mean=float(np.mean(accs)), accuracy_std=float(np.std(accs)),
        macro_f1_mean=float(np.mean(f1s)), macro_f1_std=float(np.std(f1s)),
        classes=[c.value for c in classes], confusion=pooled.tolist(),
        accuracy_per_repeat=accs, macro_f1_per_repeat=f1s,
    )
    log.info("[forest] %d-fold x %d: accuracy %.3f±%.3f, macro-F1 %.3f±%.3f",
             folds, repeats, rep.accuracy_mean, rep.accuracy_std, rep.macro_f1_mean, rep.macro_f1_std)
    return rep
