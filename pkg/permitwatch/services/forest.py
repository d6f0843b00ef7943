# permitwatch/services/forest.py
"""Random-forest labeler: bootstrap-bagged Gini trees with per-tree seeds and vote confidence."""
from __future__ import annotations

import json
import logging
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ConfigError, FormatError, ShapeError, TruncationError, UnsupportedVersionError
from ..settings import N_ESTIMATORS
from ..utils import child_rng
from .labels import CLASS_ORDER, LabelClass

log = logging.getLogger(__name__)

MAGIC = b"PSF1"
VERSION = 1
TIE_TOL = 1e-12


@dataclass
class ForestConfig:
    n_estimators: int = N_ESTIMATORS
    min_samples_split: int = 2
    max_features: int | str | None = "sqrt"   # "sqrt", "all" or a count
    bootstrap: bool = True
    seed: int = 0
    workers: int = 1

    def validate(self):
        if self.n_estimators < 1 or self.min_samples_split < 2:
            raise ConfigError("n_estimators must be >= 1 and min_samples_split >= 2")

    def n_features(self, total: int) -> int:
        mf = self.max_features
        if mf in (None, "sqrt"):
            return max(1, int(math.floor(math.sqrt(total))))
        if mf == "all":
            return total
        return max(1, min(int(mf), total))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ForestConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


def gini(labels) -> float:
    labels = list(labels)
    if not labels:
        return 0.0
    _, counts = np.unique(np.asarray([str(x) for x in labels]), return_counts=True)
    p = counts / counts.sum()
    return float(1.0 - np.sum(p * p))


def best_split(x: np.ndarray, y: np.ndarray, n_classes: int) -> tuple[float, float] | None:
    """(weighted Gini, threshold) of the best midpoint split of one feature, or None if constant.

    Among equal scores the lowest threshold wins.
    """
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = xs.size
    valid = np.flatnonzero(xs[:-1] < xs[1:])
    if valid.size == 0:
        return None
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), ys] = 1.0
    left = np.cumsum(onehot, axis=0)[valid]
    right = onehot.sum(axis=0) - left
    nl = (valid + 1).astype(np.float64)
    nr = n - nl
    gl = 1.0 - np.sum((left / nl[:, None]) ** 2, axis=1)
    gr = 1.0 - np.sum((right / nr[:, None]) ** 2, axis=1)
    score = (nl * gl + nr * gr) / n
    k = int(np.flatnonzero(score <= score.min() + TIE_TOL)[0])
    lo, hi = xs[valid[k]], xs[valid[k] + 1]
    thr = (lo + hi) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return float(score[k]), float(thr)


@dataclass
class Tree:
    feature: list[int] = field(default_factory=list)      # -1 marks a leaf
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    counts: list[list[float]] = field(default_factory=list)

    def _add(self, counts) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append([float(c) for c in counts])
        return len(self.feature) - 1

    @classmethod
    def leaf(cls, counts) -> "Tree":
        t = cls()
        t._add(counts)
        return t

    def leaf_counts(self, x: np.ndarray) -> list[float]:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return self.counts[node]

    def vote(self, x: np.ndarray) -> int:
        return int(np.argmax(self.leaf_counts(x)))


def fit_tree(X: np.ndarray, y: np.ndarray, n_classes: int, cfg: ForestConfig,
             rng: np.random.Generator) -> Tree:
    n, d = X.shape
    k = cfg.n_features(d)
    tree = Tree()
    root = tree._add(np.bincount(y, minlength=n_classes))
    stack = [(root, np.arange(n))]
    while stack:
        node, idx = stack.pop()
        yy = y[idx]
        counts = np.bincount(yy, minlength=n_classes)
        if idx.size < cfg.min_samples_split or np.count_nonzero(counts) <= 1:
            continue
        p = counts / idx.size
        parent = 1.0 - float(np.sum(p * p))
        feats = rng.choice(d, size=k, replace=False) if k < d else np.arange(d)
        best = None
        for f in feats:
            res = best_split(X[idx, f], yy, n_classes)
            if res is None:
                continue
            if best is None or res[0] < best[0] - TIE_TOL:
                best = (res[0], res[1], int(f))
        if best is None or parent - best[0] <= TIE_TOL:
            continue
        _, thr, f = best
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        l_node = tree._add(np.bincount(y[li], minlength=n_classes))
        r_node = tree._add(np.bincount(y[ri], minlength=n_classes))
        tree.feature[node], tree.threshold[node] = f, thr
        tree.left[node], tree.right[node] = l_node, r_node
        stack.append((r_node, ri))
        stack.append((l_node, li))
    return tree


@dataclass
class ForestModel:
    classes: list[LabelClass]
    trees: list[Tree]
    n_features: int
    config: ForestConfig = field(default_factory=ForestConfig)

    def votes(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_features,):
            raise ShapeError(f"forest expects {self.n_features} features, got {x.shape}")
        v = np.zeros(len(self.classes), dtype=np.int64)
        for t in self.trees:
            v[t.vote(x)] += 1
        return v


def _class_list(labels: Sequence[LabelClass]) -> list[LabelClass]:
    present = set(labels)
    ordered = [c for c in CLASS_ORDER if c in present]
    return ordered + sorted((c for c in present if c not in CLASS_ORDER), key=lambda c: c.value)


def train_forest(features, labels: Sequence[LabelClass], cfg: ForestConfig | None = None) -> ForestModel:
    cfg = cfg or ForestConfig()
    cfg.validate()
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(labels) or X.shape[0] == 0:
        raise ShapeError(f"feature matrix {X.shape} does not match {len(labels)} labels")
    labels = [LabelClass.parse(l) for l in labels]
    classes = _class_list(labels)
    if len(classes) < 2:
        log.warning("[forest] only one class (%s) present; every tree is a single leaf", classes[0].value)
    y = np.array([classes.index(l) for l in labels], dtype=np.int64)
    n = X.shape[0]

    def _one(i: int) -> Tree:
        rng = child_rng(cfg.seed, i)
        if cfg.bootstrap:
            rows = rng.integers(0, n, size=n)
            return fit_tree(X[rows], y[rows], len(classes), cfg, rng)
        return fit_tree(X, y, len(classes), cfg, rng)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            trees = list(ex.map(_one, range(cfg.n_estimators)))
    else:
        trees = [_one(i) for i in range(cfg.n_estimators)]
    log.info("[forest] %d trees over %d samples, %d features, classes %s",
             len(trees), n, X.shape[1], [c.value for c in classes])
    return ForestModel(classes=classes, trees=trees, n_features=X.shape[1], config=cfg)


def classify_forest(forest: ForestModel, features) -> tuple[LabelClass, float]:
    """Plurality vote; ties go to the earlier class in KRF1, KRF2, KRF5, LRF, Other order."""
    v = forest.votes(features)
    k = int(np.argmax(v))
    return forest.classes[k], float(v[k] / len(forest.trees))


# ------------------------ PSF1 ------------------------

def encode_forest(forest: ForestModel) -> bytes:
    body = json.dumps({
        "classes": [c.value for c in forest.classes],
        "n_features": forest.n_features,
        "config": {k: v for k, v in forest.config.to_dict().items() if k != "workers"},
        "trees": [asdict(t) for t in forest.trees],
    }, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", VERSION) + body


def decode_forest(data: bytes) -> ForestModel:
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(data[:4])!r}, expected {MAGIC!r}")
    if len(data) < 8:
        raise TruncationError("truncated PSF1 header")
    (version,) = struct.unpack("<I", data[4:8])
    if version > VERSION:
        raise UnsupportedVersionError(f"PSF version {version} is newer than supported {VERSION}")
    try:
        d = json.loads(data[8:].decode("utf-8"))
        return ForestModel(
            classes=[LabelClass.parse(c) for c in d["classes"]],
            trees=[Tree(**t) for t in d["trees"]],
            n_features=int(d["n_features"]),
            config=ForestConfig.from_dict(d.get("config") or {}),
        )
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"corrupt PSF1 body: {e}")


def save_forest(path, forest: ForestModel) -> int:
    payload = encode_forest(forest)
    with open(path, "wb") as f:
        f.write(payload)
    return len(payload)


def load_forest(path) -> ForestModel:
    with open(path, "rb") as f:
        return decode_forest(f.read())
