"""Granular-ball construction by purity-driven 2-means splitting."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .clustering import _distinct_at_least, kmeans, row_distances


@dataclass(frozen=True, eq=False)
class GranularBall:
    """A ball over rows of a backing instance store.

    ``majority`` is the number of members carrying ``label``; purity is derived
    from it so instances inserted later (assumed to be of the ball's class)
    keep the bookkeeping exact without storing per-member labels.
    ``residue`` marks a ball of coincident points that could not be split.
    """

    center: np.ndarray
    radius: float
    members: np.ndarray
    label: int
    majority: int
    subspace: tuple[int, ...]
    residue: bool = False

    @property
    def size(self) -> int:
        return int(self.members.shape[0])

    @property
    def purity(self) -> float:
        return self.majority / self.size

    def contains(self, point: np.ndarray) -> bool:
        x = np.asarray(point, dtype=np.float64)[list(self.subspace)]
        return bool(row_distances(x[None, :], self.center)[0] <= self.radius)


@dataclass(frozen=True)
class BallSetStats:
    ball_count: int
    coverage: int
    mean_purity: float
    residue_count: int

    @property
    def loss(self) -> float:
        return 1.0 - self.mean_purity


def _majority(labels: np.ndarray) -> tuple[int, int]:
    values, counts = np.unique(labels, return_counts=True)
    j = int(np.argmax(counts))  # np.unique sorts, so ties fall to the lowest label id
    return int(values[j]), int(counts[j])


def ball_from_members(store, members, subspace: Sequence[int], labels, residue: bool = False) -> GranularBall:
    members = np.sort(np.asarray(members, dtype=np.int64))
    if members.size == 0:
        raise ValueError("a granular ball needs at least one member")
    subspace = tuple(int(a) for a in subspace)
    pts = np.asarray(store, dtype=np.float64)[np.ix_(members, subspace)]
    center = pts.mean(axis=0)
    radius = float(row_distances(pts, center).max())
    label, majority = _majority(np.asarray(labels)[members])
    return GranularBall(center, radius, members, label, majority, subspace, residue)


def generate_balls(store, labels, subspace: Sequence[int], purity_threshold: float, seed: int = 0,
                   max_iter: int = 100) -> list[GranularBall]:
    """Cover every row of ``store`` with balls of purity >= ``purity_threshold``.

    The first partition is k-means seeded with the per-class centroids; any
    ball below the threshold is then split by 2-means until it is pure
    enough, a singleton, or a set of coincident points (kept as residue).
    Balls come back ordered by their lowest member index.
    """
    store = np.asarray(store, dtype=np.float64)
    labels = np.asarray(labels)
    if store.shape[0] == 0:
        raise ValueError("cannot granulate an empty instance set")
    if labels.shape[0] != store.shape[0]:
        raise ValueError("labels missing or of the wrong length")
    subspace = tuple(int(a) for a in subspace)
    x = store[:, subspace]

    classes = np.unique(labels)
    pending: list[np.ndarray] = []
    if classes.size > 1 and _distinct_at_least(x, classes.size):
        seeds = np.vstack([x[labels == c].mean(axis=0) for c in classes])
        init = kmeans(x, classes.size, seeds=seeds, max_iter=max_iter, seed=seed)
        pending = [init.members(c) for c in range(classes.size)]
    else:
        pending = [np.arange(x.shape[0])]

    done: list[GranularBall] = []
    while pending:
        idx = pending.pop()
        ball = ball_from_members(store, idx, subspace, labels)
        if ball.purity >= purity_threshold or ball.size == 1:
            done.append(ball)
            continue
        pts = x[idx]
        if not _distinct_at_least(pts, 2):
            done.append(replace(ball, residue=True))
            continue
        split = kmeans(pts, 2, max_iter=max_iter, seed=seed)
        pending.extend(idx[split.members(c)] for c in (1, 0))
    done.sort(key=lambda b: int(b.members[0]))
    return done


def insert_known(ball: GranularBall, instance_index: int, store) -> GranularBall:
    """Add an identified instance to ``ball`` without moving its center or radius."""
    point = np.asarray(store, dtype=np.float64)[instance_index]
    if not ball.contains(point):
        raise ValueError(f"instance {instance_index} lies outside the ball")
    members = np.sort(np.append(ball.members, np.int64(instance_index)))
    return replace(ball, members=members, majority=ball.majority + 1)


def ball_stats(balls: Sequence[GranularBall]) -> BallSetStats:
    if not balls:
        return BallSetStats(0, 0, 0.0, 0)
    return BallSetStats(
        ball_count=len(balls),
        coverage=sum(b.size for b in balls),
        mean_purity=float(np.mean([b.purity for b in balls])),
        residue_count=sum(b.residue for b in balls),
    )
