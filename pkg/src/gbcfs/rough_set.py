"""Generation positive region and redundancy-driven backward elimination."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .granular_ball import GranularBall, generate_balls

FeatureSubset = tuple[int, ...]

# a ball enters the positive region only when every member shares its class;
# the generation threshold T merely decides when splitting stops
REGION_THRESHOLD = 1.0


def as_subset(indices: Iterable[int], d: int | None = None) -> FeatureSubset:
    subset = tuple(sorted({int(a) for a in indices}))
    if d is not None and any(not 0 <= a < d for a in subset):
        raise ValueError(f"feature index out of range [0, {d})")
    return subset


@dataclass(frozen=True)
class PositiveRegionStat:
    covered_instances: int
    qualifying_balls: int
    threshold_used: float
    total_instances: int = 0
    total_balls: int = 0


@dataclass(frozen=True)
class FeatureDecision:
    feature: int
    redundant: bool
    baseline_covered: int
    trial_covered: int
    working: FeatureSubset

    def to_dict(self) -> dict:
        out = asdict(self)
        out["working"] = list(self.working)
        return out


def positive_region(balls: Sequence[GranularBall], purity_threshold: float) -> PositiveRegionStat:
    """Instances covered by balls whose purity reaches the threshold.

    With threshold 1 a ball qualifies only when all its members share a class,
    which is the lower-approximation condition with each member's neighborhood
    taken to be its ball.
    """
    covered = 0
    qualifying = 0
    for b in balls:
        if b.purity >= purity_threshold:
            covered += b.size
            qualifying += 1
    return PositiveRegionStat(
        covered_instances=covered,
        qualifying_balls=qualifying,
        threshold_used=purity_threshold,
        total_instances=sum(b.size for b in balls),
        total_balls=len(balls),
    )


def region_on(store, labels, subset: Sequence[int], purity_threshold: float, seed: int = 0,
              region_threshold: float = REGION_THRESHOLD) -> PositiveRegionStat:
    """Rebuild balls on ``subset`` and measure their positive region."""
    balls = generate_balls(store, labels, subset, purity_threshold, seed)
    return positive_region(balls, region_threshold)


def is_redundant(store, labels, working: Sequence[int], candidate: int, purity_threshold: float,
                 baseline: PositiveRegionStat, seed: int = 0,
                 region_threshold: float = REGION_THRESHOLD) -> tuple[bool, PositiveRegionStat]:
    working = as_subset(working)
    if candidate not in working:
        raise ValueError(f"feature {candidate} is not in the working set")
    if len(working) < 2:
        raise ValueError("cannot test the last remaining feature")
    reduced = tuple(a for a in working if a != candidate)
    trial = region_on(store, labels, reduced, purity_threshold, seed, region_threshold)
    return trial.covered_instances >= baseline.covered_instances, trial


def eliminate(store, labels, working: Sequence[int], candidates: Sequence[int], purity_threshold: float,
              seed: int = 0, baseline: PositiveRegionStat | None = None,
              region_threshold: float = REGION_THRESHOLD):
    """Single ascending pass over ``candidates``, dropping each redundant one.

    Returns the surviving working set, the candidates that were kept, and the
    audit trail. The baseline is replaced by the trial region after each
    removal, since the balls have to be rebuilt on the smaller set.
    """
    working = as_subset(working)
    if baseline is None:
        baseline = region_on(store, labels, working, purity_threshold, seed, region_threshold)
    kept: list[int] = []
    audit: list[FeatureDecision] = []
    for a in sorted(candidates):
        if len(working) < 2:
            kept.append(a)
            continue
        redundant, trial = is_redundant(store, labels, working, a, purity_threshold, baseline, seed,
                                        region_threshold)
        audit.append(FeatureDecision(a, redundant, baseline.covered_instances, trial.covered_instances, working))
        if redundant:
            working = tuple(f for f in working if f != a)
            baseline = trial
        else:
            kept.append(a)
    return working, kept, audit


def select_features_initial(store, labels, purity_threshold: float, seed: int = 0,
                            region_threshold: float = REGION_THRESHOLD):
    store = np.asarray(store, dtype=np.float64)
    if store.ndim != 2 or store.shape[0] == 0 or store.shape[1] == 0:
        raise ValueError("feature selection needs a non-empty labeled instance matrix")
    if labels is None:
        raise ValueError("feature selection needs labels")
    everything = tuple(range(store.shape[1]))
    subset, _, audit = eliminate(store, labels, everything, everything, purity_threshold, seed,
                                 region_threshold=region_threshold)
    return subset, audit
