"""CSV ingestion, min-max scaling and class-incremental scenario synthesis."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError

SCENARIO_VERSION = 1


@dataclass(frozen=True)
class Dataset:
    """Instance matrix with optional labels.

    ``hidden_labels`` is the evaluation side-channel for stream batches: the
    continual engine never reads it.
    """

    instances: np.ndarray
    labels: np.ndarray | None = None
    feature_names: tuple[str, ...] = ()
    label_names: dict[int, str] = field(default_factory=dict)
    hidden_labels: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.instances, dtype=np.float64)
        if x.ndim != 2:
            raise DataError("instances must be a 2-d matrix")
        object.__setattr__(self, "instances", x)
        if not self.feature_names:
            object.__setattr__(self, "feature_names", tuple(f"f{i}" for i in range(x.shape[1])))
        elif len(self.feature_names) != x.shape[1]:
            raise DataError("feature_names length does not match column count")
        for name in ("labels", "hidden_labels"):
            lab = getattr(self, name)
            if lab is not None:
                lab = np.asarray(lab, dtype=np.int64)
                if lab.shape != (x.shape[0],):
                    raise DataError(f"{name} must have length {x.shape[0]}")
                object.__setattr__(self, name, lab)

    @property
    def n(self) -> int:
        return self.instances.shape[0]

    @property
    def d(self) -> int:
        return self.instances.shape[1]

    @property
    def class_ids(self) -> frozenset[int]:
        if self.labels is None:
            return frozenset()
        return frozenset(int(v) for v in np.unique(self.labels))


@dataclass(frozen=True)
class ScenarioSchedule:
    initial_classes: frozenset[int]
    periods: tuple[frozenset[int], ...]
    init_fraction: float
    inc_fraction: float
    seed: int
    class_order: tuple[int, ...] = ()

    def class_counts(self) -> tuple[int, ...]:
        return (len(self.initial_classes),) + tuple(len(p) for p in self.periods)

    def to_dict(self) -> dict:
        return {
            "version": SCENARIO_VERSION,
            "init_fraction": self.init_fraction,
            "inc_fraction": self.inc_fraction,
            "seed": self.seed,
            "class_order": list(self.class_order),
            "initial_classes": sorted(self.initial_classes),
            "periods": [sorted(p) for p in self.periods],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ScenarioSchedule":
        if obj.get("version") != SCENARIO_VERSION:
            raise DataError(f"unsupported scenario version {obj.get('version')!r}")
        return cls(
            initial_classes=frozenset(obj["initial_classes"]),
            periods=tuple(frozenset(p) for p in obj["periods"]),
            init_fraction=obj["init_fraction"],
            inc_fraction=obj["inc_fraction"],
            seed=obj["seed"],
            class_order=tuple(obj.get("class_order", ())),
        )


def _parse_label_column(header: list[str], label_column) -> int | None:
    if label_column is None:
        return None
    if isinstance(label_column, int):
        idx = label_column
    elif isinstance(label_column, str) and label_column in header:
        idx = header.index(label_column)
    else:
        try:
            idx = int(label_column)
        except (TypeError, ValueError):
            raise DataError(f"label column {label_column!r} not found in header") from None
    if idx < 0:
        idx += len(header)
    if not 0 <= idx < len(header):
        raise DataError(f"label column index {label_column!r} out of range")
    return idx


def load_csv(path, label_column=None, delimiter: str = ",") -> Dataset:
    """Read a headed CSV file into an un-normalized :class:`Dataset`.

    ``label_column`` is a header name or a (possibly negative) column index.
    Integer-valued labels are kept as they are; any other labels are mapped to
    dense ids in order of first appearance.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if r]
    if len(rows) < 2:
        raise DataError(f"{path}: empty dataset")
    header, body = rows[0], rows[1:]
    width = len(header)
    for lineno, row in enumerate(body, start=2):
        if len(row) != width:
            raise DataError(f"{path}:{lineno}: ragged row ({len(row)} cells, expected {width})")
    lab_idx = _parse_label_column(header, label_column)
    feat_idx = [j for j in range(width) if j != lab_idx]
    if not feat_idx:
        raise DataError(f"{path}: no feature columns")

    values = np.empty((len(body), len(feat_idx)))
    for i, row in enumerate(body):
        for k, j in enumerate(feat_idx):
            try:
                values[i, k] = float(row[j])
            except ValueError:
                raise DataError(f"{path}:{i + 2}: non-numeric feature cell {row[j]!r}") from None

    labels = None
    label_names: dict[int, str] = {}
    if lab_idx is not None:
        raw = [row[lab_idx].strip() for row in body]
        try:
            labels = np.array([int(v) for v in raw], dtype=np.int64)
            label_names = {int(v): v for v in raw}
        except ValueError:
            ids: dict[str, int] = {}
            for v in raw:
                ids.setdefault(v, len(ids))
            labels = np.array([ids[v] for v in raw], dtype=np.int64)
            label_names = {i: v for v, i in ids.items()}
    return Dataset(
        instances=values,
        labels=labels,
        feature_names=tuple(header[j] for j in feat_idx),
        label_names=label_names,
    )


def write_csv(data: Dataset, path, labels: np.ndarray | None = None, label_name: str = "label") -> None:
    """Write features (and ``labels`` if given) with round-trip float formatting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = list(data.feature_names)
        if labels is not None:
            header.append(label_name)
        w.writerow(header)
        for i in range(data.n):
            row = [repr(float(v)) for v in data.instances[i]]
            if labels is not None:
                row.append(str(int(labels[i])))
            w.writerow(row)


def minmax_normalize(data: Dataset) -> Dataset:
    x = data.instances
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (x - lo) / safe, 0.0)
    # guard against 1 + eps from rounding so the [0, 1] invariant is exact
    np.clip(scaled, 0.0, 1.0, out=scaled)
    return replace(data, instances=scaled)


def _exact(fraction: float) -> Fraction:
    # decimal semantics: 0.3 * 10 is exactly 3
    return Fraction(str(fraction))


def scenario_counts(n_classes: int, init_fraction: float, inc_fraction: float) -> tuple[int, int]:
    """Initial class count (rounded down) and per-period count (rounded up)."""
    n_init = math.floor(_exact(init_fraction) * n_classes)
    n_inc = math.ceil(_exact(inc_fraction) * n_classes)
    return n_init, n_inc


def make_scenario(data: Dataset, init_fraction: float, inc_fraction: float, seed: int,
                  shuffle: bool = True) -> ScenarioSchedule:
    """Deal classes into an initial group and fixed-size stream periods.

    With ``shuffle`` the sorted class ids are permuted by ``seed``; otherwise
    they are dealt in ascending id order (first appearance for text labels).
    """
    if data.labels is None:
        raise DataError("scenario synthesis needs a labeled dataset")
    if not (0 < init_fraction < 1 and 0 < inc_fraction < 1):
        raise DataError("init and inc fractions must lie in (0, 1)")
    classes = sorted(data.class_ids)
    n_init, n_inc = scenario_counts(len(classes), init_fraction, inc_fraction)
    if n_init == 0:
        raise DataError(
            f"init fraction {init_fraction} of {len(classes)} classes rounds down to 0 classes"
        )
    rng = np.random.default_rng(seed)
    order = [classes[i] for i in rng.permutation(len(classes))] if shuffle else classes
    rest = order[n_init:]
    periods = tuple(frozenset(rest[i:i + n_inc]) for i in range(0, len(rest), n_inc))
    return ScenarioSchedule(
        initial_classes=frozenset(order[:n_init]),
        periods=periods,
        init_fraction=init_fraction,
        inc_fraction=inc_fraction,
        seed=seed,
        class_order=tuple(order),
    )


def split_periods(data: Dataset, schedule: ScenarioSchedule) -> tuple[Dataset, list[Dataset]]:
    if data.labels is None:
        raise DataError("cannot split an unlabeled dataset")
    groups = [schedule.initial_classes, *schedule.periods]
    scheduled = set().union(*groups)
    if scheduled != set(data.class_ids) or sum(len(g) for g in groups) != len(scheduled):
        raise DataError("schedule classes do not match the dataset's class ids")

    def take(classes, visible):
        idx = np.flatnonzero(np.isin(data.labels, sorted(classes)))
        sub = data.labels[idx]
        return replace(
            data,
            instances=data.instances[idx],
            labels=sub if visible else None,
            hidden_labels=None if visible else sub,
        )

    initial = take(schedule.initial_classes, True)
    return initial, [take(p, False) for p in schedule.periods]


def save_scenario(schedule: ScenarioSchedule, path) -> None:
    Path(path).write_text(json.dumps(schedule.to_dict(), indent=2) + "\n")


def load_scenario(path) -> ScenarioSchedule:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read scenario file {path}: {exc}") from None
    return ScenarioSchedule.from_dict(obj)


def concat(parts: Sequence[Dataset]) -> Dataset:
    """Stack datasets row-wise, promoting hidden labels to visible ones."""
    labels = []
    for p in parts:
        lab = p.labels if p.labels is not None else p.hidden_labels
        if lab is None:
            raise DataError("concat needs labels on every part")
        labels.append(lab)
    return Dataset(
        instances=np.vstack([p.instances for p in parts]),
        labels=np.concatenate(labels),
        feature_names=parts[0].feature_names,
        label_names=parts[0].label_names,
    )
