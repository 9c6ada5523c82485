"""Downstream checks: k-NN cross-validation, unknown detection, timing benchmark."""
from __future__ import annotations

import hashlib
import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .clustering import pairwise_distances
from .continual import initial_learning, process_period, replay
from .dataset import Dataset, ScenarioSchedule, concat, split_periods
from .errors import DataError
from .rough_set import FeatureSubset, select_features_initial


def knn_predict(train: Dataset, test: Dataset, k: int = 3, subset: Sequence[int] | None = None) -> np.ndarray:
    """Majority vote of the ``k`` nearest training rows.

    Equal distances favour the lower training index and tied votes the lower
    label id.
    """
    if train.labels is None:
        raise DataError("training data must be labeled")
    if not 1 <= k <= train.n:
        raise DataError(f"k={k} must lie in [1, {train.n}]")
    cols = list(range(train.d)) if subset is None else list(subset)
    xtr = train.instances[:, cols]
    xte = test.instances[:, cols]
    classes, dense = np.unique(train.labels, return_inverse=True)
    out = np.empty(test.n, dtype=np.int64)
    step = max(1, 2_000_000 // max(1, train.n * max(1, len(cols))))
    for s in range(0, test.n, step):
        dist = pairwise_distances(xte[s:s + step], xtr)
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
        votes = np.zeros((nearest.shape[0], classes.size), dtype=np.int64)
        np.add.at(votes, (np.repeat(np.arange(nearest.shape[0]), k), dense[nearest].ravel()), 1)
        out[s:s + step] = classes[np.argmax(votes, axis=1)]
    return out


def stratified_folds(labels: np.ndarray, n_folds: int = 10, seed: int = 0) -> np.ndarray:
    """Fold id per row; each class is shuffled then dealt round-robin.

    The dealing position carries over between classes, which keeps fold sizes
    within one of each other as well as per-class counts.
    """
    rng = np.random.default_rng(seed)
    folds = np.empty(labels.shape[0], dtype=np.int64)
    start = 0
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        folds[idx] = (start + np.arange(idx.size)) % n_folds
        start = (start + idx.size) % n_folds
    return folds


def confusion(truth: np.ndarray, pred: np.ndarray, classes: np.ndarray) -> np.ndarray:
    pos = {int(c): i for i, c in enumerate(classes)}
    m = np.zeros((classes.size, classes.size), dtype=np.int64)
    for t, p in zip(truth, pred):
        m[pos[int(t)], pos[int(p)]] += 1
    return m


def accuracy_from_confusion(m: np.ndarray) -> float:
    return float(np.trace(m) / m.sum())


def macro_f1_from_confusion(m: np.ndarray) -> float:
    """Unweighted mean F1 over classes that occur in the truth rows."""
    scores = []
    for i in range(m.shape[0]):
        support = m[i].sum()
        if support == 0:
            continue
        tp = m[i, i]
        predicted = m[:, i].sum()
        prec = tp / predicted if predicted else 0.0
        rec = tp / support
        scores.append(0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec))
    return float(np.mean(scores))


@dataclass
class CvResult:
    fold_accuracies: list[float]
    mean_accuracy: float
    std_accuracy: float
    macro_f1_mean: float
    k_used: int
    subset_used: FeatureSubset
    fold_macro_f1: list[float] = field(default_factory=list)
    confusions: list[np.ndarray] = field(default_factory=list, repr=False)
    classes: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["subset_used"] = list(self.subset_used)
        out["confusions"] = [c.tolist() for c in self.confusions]
        return out


def stratified_tenfold(data: Dataset, subset: Sequence[int] | None = None, k: int = 3, seed: int = 0,
                       n_folds: int = 10) -> CvResult:
    if data.n == 0 or data.labels is None:
        raise DataError("cross-validation needs a non-empty labeled dataset")
    subset = tuple(range(data.d)) if subset is None else tuple(subset)
    folds = stratified_folds(data.labels, n_folds, seed)
    classes = np.unique(data.labels)
    k_used = k
    accs, f1s, mats = [], [], []
    for f in range(n_folds):
        test = folds == f
        if not test.any():
            continue
        train = Dataset(data.instances[~test], data.labels[~test])
        k_used = min(k_used, train.n)
        pred = knn_predict(train, Dataset(data.instances[test]), k_used, subset)
        m = confusion(data.labels[test], pred, classes)
        mats.append(m)
        accs.append(accuracy_from_confusion(m))
        f1s.append(macro_f1_from_confusion(m))
    return CvResult(
        fold_accuracies=accs,
        mean_accuracy=float(np.mean(accs)),
        std_accuracy=float(np.std(accs)),
        macro_f1_mean=float(np.mean(f1s)),
        k_used=k_used,
        subset_used=subset,
        fold_macro_f1=f1s,
        confusions=mats,
        classes=[int(c) for c in classes],
    )


def unknown_detection_metrics(truth, predicted) -> tuple[float, float, float]:
    """Precision, recall and F1 with "unknown" as the positive class.

    Empty denominators count as perfect (no false alarms / nothing missed).
    """
    truth = np.asarray(truth, dtype=bool)
    predicted = np.asarray(predicted, dtype=bool)
    if truth.shape != predicted.shape:
        raise ValueError("truth and predicted flags differ in length")
    tp = int(np.sum(truth & predicted))
    fp = int(np.sum(~truth & predicted))
    fn = int(np.sum(truth & ~predicted))
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass
class BenchResult:
    per_period_continual_ms: list[float]
    per_period_scratch_ms: list[float]
    cumulative_speedup: float
    initial_continual_ms: float
    initial_scratch_ms: float
    repeats: int
    config_hash_continual: str
    config_hash_scratch: str
    continual_subsets: list[list[int]] = field(default_factory=list)
    scratch_subsets: list[list[int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _config_hash(data: Dataset, schedule: ScenarioSchedule, purity_threshold: float, seed: int) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(data.instances).tobytes())
    h.update(np.ascontiguousarray(data.labels).tobytes())
    h.update(json.dumps([schedule.to_dict(), purity_threshold, seed], sort_keys=True).encode())
    return h.hexdigest()[:16]


def _continual_arm(initial, streams, purity_threshold, eps, min_pts, seed):
    times = []
    t = time.perf_counter()
    kb, _ = initial_learning(initial, purity_threshold, seed)
    first = (time.perf_counter() - t) * 1e3
    subsets = []
    for i, batch in enumerate(streams, start=1):
        t = time.perf_counter()
        kb, _ = process_period(kb, batch, eps, min_pts, period_index=i)
        times.append((time.perf_counter() - t) * 1e3)
        subsets.append(list(kb.selected))
    return first, times, subsets


def _scratch_arm(revealed, purity_threshold, seed):
    times, subsets = [], []
    for part in revealed:
        t = time.perf_counter()
        subset, _ = select_features_initial(part.instances, part.labels, purity_threshold, seed)
        times.append((time.perf_counter() - t) * 1e3)
        subsets.append(list(subset))
    return times[0], times[1:], subsets[1:]


def bench_continual_vs_scratch(data: Dataset, schedule: ScenarioSchedule, purity_threshold: float = 0.65,
                               eps: float = 0.3, min_pts: int = 10, seed: int = 0, repeats: int = 5,
                               progress=None) -> BenchResult:
    """Time continual processing against re-selecting from scratch each period.

    The scratch arm sees the true labels of everything revealed so far.
    Per-period times are medians over ``repeats`` runs after one untimed
    warm-up; the speedup covers the stream periods only.
    """
    if len(schedule.periods) < 2:
        raise DataError("the benchmark needs at least two stream periods")
    initial, streams = split_periods(data, schedule)
    # merging is bookkeeping, not selection work, so it stays out of the timed region
    revealed = [initial] + [concat([initial, *streams[:t]]) for t in range(1, len(streams) + 1)]

    _continual_arm(initial, streams[:1], purity_threshold, eps, min_pts, seed)
    _scratch_arm(revealed[:2], purity_threshold, seed)

    cont_runs, scratch_runs, cont_first, scratch_first = [], [], [], []
    for r in range(repeats):
        f, times, cont_sub = _continual_arm(initial, streams, purity_threshold, eps, min_pts, seed)
        cont_first.append(f)
        cont_runs.append(times)
        f, times, scratch_sub = _scratch_arm(revealed, purity_threshold, seed)
        scratch_first.append(f)
        scratch_runs.append(times)
        if progress:
            progress(r + 1, repeats)
    cont = [statistics.median(col) for col in zip(*cont_runs)]
    scratch = [statistics.median(col) for col in zip(*scratch_runs)]
    return BenchResult(
        per_period_continual_ms=cont,
        per_period_scratch_ms=scratch,
        cumulative_speedup=sum(scratch) / sum(cont),
        initial_continual_ms=statistics.median(cont_first),
        initial_scratch_ms=statistics.median(scratch_first),
        repeats=repeats,
        config_hash_continual=_config_hash(data, schedule, purity_threshold, seed),
        config_hash_scratch=_config_hash(data, schedule, purity_threshold, seed),
        continual_subsets=cont_sub,
        scratch_subsets=scratch_sub,
    )


PURITY_GRID = (0.65, 0.75, 0.85, 0.95, 1.0)


@dataclass
class SweepCell:
    purity_threshold: float
    subset: list[int]
    mean_accuracy: float
    std_accuracy: float
    macro_f1_mean: float


@dataclass
class SweepResult:
    cells: list[SweepCell]
    all_features: CvResult

    @property
    def best(self) -> SweepCell:
        # ties keep the lowest threshold, which is the first in grid order
        return max(self.cells, key=lambda c: c.mean_accuracy)

    def to_dict(self) -> dict:
        return {
            "cells": [asdict(c) for c in self.cells],
            "best": asdict(self.best),
            "all_features": {
                "mean_accuracy": self.all_features.mean_accuracy,
                "std_accuracy": self.all_features.std_accuracy,
                "macro_f1_mean": self.all_features.macro_f1_mean,
            },
        }


def purity_sweep(data: Dataset, schedule: ScenarioSchedule, grid: Sequence[float] = PURITY_GRID,
                 eps: float = 0.3, min_pts: int = 10, seed: int = 0, k: int = 3,
                 cv_seed: int = 0) -> SweepResult:
    """Replay the scenario once per purity threshold and score each final subset.

    Every subset is scored by k-NN cross-validation on the whole dataset with
    true labels; the envelope is the best cell.
    """
    initial, streams = split_periods(data, schedule)
    cells = []
    for t in grid:
        kb, _, _ = replay(initial, streams, t, eps, min_pts, seed)
        cv = stratified_tenfold(data, kb.selected, k, cv_seed)
        cells.append(SweepCell(t, list(kb.selected), cv.mean_accuracy, cv.std_accuracy, cv.macro_f1_mean))
    return SweepResult(cells, stratified_tenfold(data, None, k, cv_seed))
