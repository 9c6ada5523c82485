"""Open-world continual feature selection over a granular-ball knowledge base."""
from __future__ import annotations

import json
import os
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .clustering import NOISE, dbscan, row_distances
from .dataset import Dataset
from .errors import DataError, KBFormatError
from .granular_ball import GranularBall, generate_balls, insert_known
from .rough_set import FeatureDecision, FeatureSubset, as_subset, eliminate, select_features_initial

KB_VERSION = 1
# pseudo-labels live far above any dense label id a CSV produces
PSEUDO_BASE = 1_000_000


@dataclass(frozen=True, eq=False)
class KnowledgeBase:
    """Balls with their member coordinates plus the selected feature subset.

    ``store`` holds every retained instance; ball members index into it and
    are kept packed in ball order. ``noise_buffer`` carries DBSCAN noise into
    the next period.
    """

    store: np.ndarray
    balls: tuple[GranularBall, ...]
    selected: FeatureSubset
    known_labels: frozenset[int]
    pseudo_labels: tuple[int, ...]
    pseudo_counter: int
    purity_threshold: float
    generation_seed: int
    noise_buffer: np.ndarray
    version: int = KB_VERSION

    @property
    def d(self) -> int:
        return self.store.shape[1]

    def member_labels(self) -> np.ndarray:
        """Label of every stored instance, taken from the ball that holds it."""
        labels = np.empty(self.store.shape[0], dtype=np.int64)
        for b in self.balls:
            labels[b.members] = b.label
        return labels

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "purity_threshold": self.purity_threshold,
            "seed": self.generation_seed,
            "selected": list(self.selected),
            "known_labels": sorted(self.known_labels),
            "pseudo_labels": list(self.pseudo_labels),
            "pseudo_counter": self.pseudo_counter,
            "d": self.d,
            "balls": [
                {
                    "label": b.label,
                    "center": b.center.tolist(),
                    "radius": b.radius,
                    "subspace": list(b.subspace),
                    "majority": b.majority,
                    "residue": b.residue,
                    "members": self.store[b.members].tolist(),
                }
                for b in self.balls
            ],
            "noise_buffer": self.noise_buffer.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "KnowledgeBase":
        if not isinstance(obj, dict):
            raise KBFormatError("knowledge base must be a JSON object")
        if obj.get("version") != KB_VERSION:
            raise KBFormatError(f"unsupported knowledge-base version {obj.get('version')!r}")
        try:
            d = int(obj["d"])
            rows, balls, start = [], [], 0
            for b in obj["balls"]:
                members = np.asarray(b["members"], dtype=np.float64).reshape(-1, d)
                rows.append(members)
                balls.append(GranularBall(
                    center=np.asarray(b["center"], dtype=np.float64),
                    radius=float(b["radius"]),
                    members=np.arange(start, start + members.shape[0], dtype=np.int64),
                    label=int(b["label"]),
                    majority=int(b["majority"]),
                    subspace=tuple(int(a) for a in b["subspace"]),
                    residue=bool(b["residue"]),
                ))
                start += members.shape[0]
            store = np.vstack(rows) if rows else np.empty((0, d))
            return cls(
                store=store,
                balls=tuple(balls),
                selected=as_subset(obj["selected"], d),
                known_labels=frozenset(int(v) for v in obj["known_labels"]),
                pseudo_labels=tuple(int(v) for v in obj["pseudo_labels"]),
                pseudo_counter=int(obj["pseudo_counter"]),
                purity_threshold=float(obj["purity_threshold"]),
                generation_seed=int(obj["seed"]),
                noise_buffer=np.asarray(obj["noise_buffer"], dtype=np.float64).reshape(-1, d),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise KBFormatError(f"malformed knowledge base: {exc}") from None


def _pack(store: np.ndarray, balls: Sequence[GranularBall]):
    """Re-lay the store so each ball's members are contiguous, in ball order."""
    order = np.concatenate([b.members for b in balls]) if balls else np.empty(0, dtype=np.int64)
    packed, start = [], 0
    for b in balls:
        packed.append(replace(b, members=np.arange(start, start + b.size, dtype=np.int64)))
        start += b.size
    return store[order], tuple(packed)


def dumps_kb(kb: KnowledgeBase) -> str:
    return json.dumps(kb.to_dict(), separators=(",", ":")) + "\n"


def save_kb(kb: KnowledgeBase, path) -> None:
    """Write atomically: a failed write never clobbers an existing file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(dumps_kb(kb))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_kb(path) -> KnowledgeBase:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise KBFormatError(f"cannot read knowledge base {path}: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise KBFormatError(f"malformed knowledge base {path}: {exc}") from None
    return KnowledgeBase.from_dict(obj)


def initial_learning(initial: Dataset, purity_threshold: float, seed: int = 0):
    """Build the initial knowledge base; also returns the selection audit."""
    if initial.n == 0:
        raise DataError("initial data is empty")
    if initial.labels is None:
        raise DataError("initial data must be labeled")
    x, y = initial.instances, initial.labels
    balls = generate_balls(x, y, range(initial.d), purity_threshold, seed)
    selected, audit = select_features_initial(x, y, purity_threshold, seed)
    store, balls = _pack(x, balls)
    known = frozenset(int(v) for v in np.unique(y))
    kb = KnowledgeBase(
        store=store,
        balls=balls,
        selected=selected,
        known_labels=known,
        pseudo_labels=(),
        pseudo_counter=max(PSEUDO_BASE, max(known) + 1),
        purity_threshold=purity_threshold,
        generation_seed=seed,
        noise_buffer=np.empty((0, initial.d)),
    )
    return kb, audit


def build_knowledge_base(initial: Dataset, purity_threshold: float, seed: int = 0) -> KnowledgeBase:
    return initial_learning(initial, purity_threshold, seed)[0]


@dataclass(frozen=True)
class Identification:
    known: bool
    label: int | None = None
    ball: int | None = None


def identify_batch(kb: KnowledgeBase, points) -> np.ndarray:
    """Index of the assigned ball per row, or -1 for unknown instances.

    Among containing balls the one with the nearest center wins; equal
    distances go to the lower ball index.
    """
    points = np.asarray(points, dtype=np.float64)
    best = np.full(points.shape[0], -1, dtype=np.int64)
    best_dist = np.full(points.shape[0], np.inf)
    for j, b in enumerate(kb.balls):
        dist = row_distances(points[:, list(b.subspace)], b.center)
        take = (dist <= b.radius) & (dist < best_dist)
        best[take] = j
        best_dist[take] = dist[take]
    return best


def identify(kb: KnowledgeBase, instance) -> Identification:
    instance = np.asarray(instance, dtype=np.float64)
    if instance.shape != (kb.d,):
        raise DataError(f"instance has {instance.size} features, knowledge base expects {kb.d}")
    j = int(identify_batch(kb, instance[None, :])[0])
    if j < 0:
        return Identification(False)
    return Identification(True, kb.balls[j].label, j)


@dataclass
class PeriodReport:
    period_index: int
    known_count: int
    unknown_count: int
    noise_count: int
    new_pseudo_labels: list[int]
    subset_before: FeatureSubset
    added_features: FeatureSubset
    subset_after: FeatureSubset
    ball_count: int
    wall_time_ms: dict[str, float] = field(default_factory=dict)
    audit: list[FeatureDecision] = field(default_factory=list)

    def to_dict(self, timings: bool = True) -> dict:
        out = {
            "period_index": self.period_index,
            "known_count": self.known_count,
            "unknown_count": self.unknown_count,
            "noise_count": self.noise_count,
            "new_pseudo_labels": list(self.new_pseudo_labels),
            "subset_before": list(self.subset_before),
            "added_features": list(self.added_features),
            "subset_after": list(self.subset_after),
            "ball_count": self.ball_count,
            "audit": [a.to_dict() for a in self.audit],
        }
        if timings:
            out["wall_time_ms"] = dict(self.wall_time_ms)
        return out


def _enhance(kb: KnowledgeBase, seed: int):
    if not kb.balls:
        raise DataError("knowledge base holds no granular balls")
    labels = kb.member_labels()
    everything = tuple(range(kb.d))
    candidates = [a for a in everything if a not in kb.selected]
    if not candidates:
        return kb.selected, []
    _, kept, audit = eliminate(kb.store, labels, everything, candidates, kb.purity_threshold, seed)
    return as_subset(kb.selected + tuple(kept)), audit


def enhance_subset(kb: KnowledgeBase, seed: int | None = None) -> FeatureSubset:
    """Grow the selected subset with the candidates the current balls need.

    Features already selected are never re-tested; each remaining feature is
    checked for redundancy against the full feature set, in ascending order.
    """
    return _enhance(kb, kb.generation_seed if seed is None else seed)[0]


def process_period(kb: KnowledgeBase, batch: Dataset, eps: float = 0.3, min_pts: int = 10,
                   period_index: int = 0) -> tuple[KnowledgeBase, PeriodReport]:
    """Absorb one unlabeled batch; labels on ``batch`` are ignored."""
    x = batch.instances
    if x.shape[1] != kb.d:
        raise DataError(f"batch has {x.shape[1]} features, knowledge base expects {kb.d}")
    timings: dict[str, float] = {}
    seed = kb.generation_seed

    t = time.perf_counter()
    assigned = identify_batch(kb, x)
    known_rows = np.flatnonzero(assigned >= 0)
    unknown_rows = np.flatnonzero(assigned < 0)
    n_old = kb.store.shape[0]
    store = np.vstack([kb.store, x[known_rows]])
    balls = list(kb.balls)
    for offset, row in enumerate(known_rows):
        j = assigned[row]
        balls[j] = insert_known(balls[j], n_old + offset, store)
    timings["identify"] = (time.perf_counter() - t) * 1e3

    t = time.perf_counter()
    pool = np.vstack([kb.noise_buffer, x[unknown_rows]])
    clusters = dbscan(pool, eps, min_pts) if pool.shape[0] else None
    timings["cluster"] = (time.perf_counter() - t) * 1e3

    t = time.perf_counter()
    new_labels: list[int] = []
    counter = kb.pseudo_counter
    noise = pool[:0]
    if clusters is not None:
        noise = pool[clusters.labels == NOISE]
        everything = tuple(range(kb.d))
        for c in range(clusters.k):
            rows = pool[clusters.labels == c]
            label = counter
            counter += 1
            new_labels.append(label)
            offset = store.shape[0]
            store = np.vstack([store, rows])
            for b in generate_balls(rows, np.full(rows.shape[0], label), everything, kb.purity_threshold, seed):
                balls.append(replace(b, members=b.members + offset))
    store, packed = _pack(store, balls)
    kb = replace(
        kb,
        store=store,
        balls=packed,
        pseudo_labels=kb.pseudo_labels + tuple(new_labels),
        pseudo_counter=counter,
        noise_buffer=noise,
    )
    timings["granulate"] = (time.perf_counter() - t) * 1e3

    t = time.perf_counter()
    before = kb.selected
    after, audit = _enhance(kb, seed)
    kb = replace(kb, selected=after)
    timings["enhance"] = (time.perf_counter() - t) * 1e3

    report = PeriodReport(
        period_index=period_index,
        known_count=int(known_rows.size),
        unknown_count=int(unknown_rows.size),
        noise_count=int(noise.shape[0]),
        new_pseudo_labels=new_labels,
        subset_before=before,
        added_features=tuple(a for a in after if a not in before),
        subset_after=after,
        ball_count=len(kb.balls),
        wall_time_ms=timings,
        audit=audit,
    )
    return kb, report


def replay(initial: Dataset, streams: Sequence[Dataset], purity_threshold: float, eps: float = 0.3,
           min_pts: int = 10, seed: int = 0):
    """Run initial learning followed by every stream period in order."""
    kb, audit = initial_learning(initial, purity_threshold, seed)
    reports = []
    for t, batch in enumerate(streams, start=1):
        kb, report = process_period(kb, batch, eps, min_pts, period_index=t)
        reports.append(report)
    return kb, reports, audit
