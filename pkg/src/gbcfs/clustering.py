"""Distances, seeded Lloyd k-means and DBSCAN.

All tie-breaks go to the lowest index so results never depend on scheduling.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

NOISE = -1

# rows per chunk are sized so a chunk's difference tensor stays near this many floats
_CHUNK_FLOATS = 4_000_000


def euclidean(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(row_distances(x[None, :], y)[0])


def row_distances(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Distance from every row of ``points`` to ``center``.

    Every distance that is later compared against a radius goes through here,
    so a member sitting exactly on a ball's boundary compares equal to it.
    The input is made C-ordered first: column-sliced views come back
    Fortran-ordered and einsum would then sum each row in another order.
    """
    diff = np.ascontiguousarray(points, dtype=np.float64) - center
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact (difference based) distance matrix, chunked over rows of ``a``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.empty((a.shape[0], b.shape[0]))
    step = max(1, _CHUNK_FLOATS // max(1, b.shape[0] * max(1, a.shape[1])))
    for s in range(0, a.shape[0], step):
        diff = a[s:s + step, None, :] - b[None, :, :]
        out[s:s + step] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    centroids: np.ndarray | None
    k: int
    inertia_history: list[float] = field(default_factory=list)
    n_iter: int = 0

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


def _sq_dist_to_centers(points, centers):
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _distinct_at_least(points: np.ndarray, k: int) -> bool:
    if k <= 1:
        return points.shape[0] >= 1
    if k == 2:
        return bool((points != points[0]).any())
    return np.unique(points, axis=0).shape[0] >= k


def _farthest_point_init(points: np.ndarray, k: int, seed: int) -> np.ndarray:
    # rank rows lexicographically so the choice depends on the point multiset, not row order
    rank = np.lexsort(points.T[::-1])
    ordered = points[rank]
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(ordered.shape[0]))]
    nearest = np.sum((ordered - ordered[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(nearest))
        chosen.append(nxt)
        nearest = np.minimum(nearest, np.sum((ordered - ordered[nxt]) ** 2, axis=1))
    return ordered[chosen].copy()


def kmeans(points, k: int, seeds=None, max_iter: int = 100, seed: int = 0) -> ClusterAssignment:
    """Lloyd's algorithm with deterministic initialisation and empty-cluster repair.

    With ``seeds`` absent, the first center is drawn by ``seed`` from the
    lexicographically ordered points and the rest follow farthest-point order.
    An emptied cluster takes over the point lying farthest from its own
    centroid, so every returned cluster is non-empty.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be positive")
    if n == 0 or not _distinct_at_least(points, k):
        raise ValueError(f"k={k} exceeds the number of distinct points")
    if seeds is not None:
        centers = np.array(seeds, dtype=np.float64).reshape(-1, points.shape[1])
        if centers.shape[0] != k:
            raise ValueError("number of seeds must equal k")
    else:
        centers = _farthest_point_init(points, k, seed)

    if k == 1:
        centroid = points.mean(axis=0, keepdims=True)
        sse = float(_sq_dist_to_centers(points, centroid).sum())
        return ClusterAssignment(np.zeros(n, dtype=np.int64), centroid, 1, [sse], 1)

    labels = None
    history: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dist_to_centers(points, centers)
        new = np.argmin(d2, axis=1)
        new = _repair_empty(points, new, centers, d2, k)
        new_centers = _means(points, new, k)
        history.append(float(_sq_dist_to_centers(points, new_centers)[np.arange(n), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            labels = new
            centers = new_centers
            break
        labels = new
        centers = new_centers
    return ClusterAssignment(labels, _means(points, labels, k), k, history, it)


def _means(points, labels, k):
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    sums = np.zeros((k, points.shape[1]))
    np.add.at(sums, labels, points)
    return sums / counts[:, None]


def _repair_empty(points, labels, centers, d2, k):
    counts = np.bincount(labels, minlength=k)
    if counts.min() > 0:
        return labels
    labels = labels.copy()
    own = d2[np.arange(points.shape[0]), labels]
    for empty in np.flatnonzero(counts == 0):
        # donors must keep at least one member and must not coincide with their center
        donors = counts[labels] > 1
        cand = np.where(donors, own, -1.0)
        j = int(np.argmax(cand))
        if cand[j] < 0:
            break
        counts[labels[j]] -= 1
        labels[j] = empty
        counts[empty] += 1
        own[j] = 0.0
    return labels


def neighborhoods(points: np.ndarray, eps: float) -> list[np.ndarray]:
    """Indices within the closed ``eps``-ball of each point (itself included)."""
    n = points.shape[0]
    out: list[np.ndarray] = []
    step = max(1, _CHUNK_FLOATS // max(1, n * max(1, points.shape[1])))
    for s in range(0, n, step):
        block = pairwise_distances(points[s:s + step], points)
        out.extend(np.flatnonzero(row <= eps) for row in block)
    return out


def dbscan(points, eps: float, min_pts: int) -> ClusterAssignment:
    """Density clustering; ``min_pts`` counts the query point itself."""
    if eps <= 0 or min_pts < 1:
        raise ValueError("eps must be > 0 and min_pts >= 1")
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return ClusterAssignment(labels, None, 0)
    nbrs = neighborhoods(points, eps)
    core = np.array([len(nb) >= min_pts for nb in nbrs])
    k = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = k
        queue = deque([i])
        while queue:
            p = queue.popleft()
            if not core[p]:
                continue
            for q in nbrs[p]:
                if labels[q] == NOISE:
                    labels[q] = k
                    if core[q]:
                        queue.append(q)
        k += 1
    return ClusterAssignment(labels, None, k)
