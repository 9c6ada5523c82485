"""Command-line front end.

Subcommands: scenario, init, step, eval, bench, sweep. Defaults for the
tunable parameters can be overridden through GBCFS_PURITY, GBCFS_EPS,
GBCFS_MIN_PTS, GBCFS_K and GBCFS_SEED.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .continual import initial_learning, load_kb, process_period, save_kb
from .dataset import (Dataset, load_csv, make_scenario, minmax_normalize, save_scenario, split_periods,
                      write_csv)
from .errors import ConfigError, DataError, KBFormatError
from .evaluation import PURITY_GRID, bench_continual_vs_scratch, purity_sweep, stratified_tenfold

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_KB = 0, 2, 3, 4


@dataclass(frozen=True)
class RunConfig:
    purity_threshold: float = 0.65
    dbscan_eps: float = 0.3
    dbscan_min_pts: int = 10
    knn_k: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.5 < self.purity_threshold <= 1.0:
            raise ConfigError(f"purity threshold {self.purity_threshold} must lie in (0.5, 1]")
        if not self.dbscan_eps > 0:
            raise ConfigError(f"eps {self.dbscan_eps} must be positive")
        if self.dbscan_min_pts < 1:
            raise ConfigError(f"min-pts {self.dbscan_min_pts} must be at least 1")
        if self.knn_k < 1:
            raise ConfigError(f"k {self.knn_k} must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        return cls(
            purity_threshold=getattr(args, "purity", cls.purity_threshold),
            dbscan_eps=getattr(args, "eps", cls.dbscan_eps),
            dbscan_min_pts=getattr(args, "min_pts", cls.dbscan_min_pts),
            knn_k=getattr(args, "k", cls.knn_k),
            seed=getattr(args, "seed", cls.seed),
        )


def _env(name: str, cast, default):
    raw = os.environ.get(name)
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"{name}={raw!r} is not a valid {cast.__name__}") from None


def _label_arg(value: str):
    return None if value.lower() == "none" else value


def _load(args, labeled: bool = True) -> Dataset:
    label = args.label if labeled else None
    data = load_csv(args.data, label, args.delimiter)
    if labeled and data.labels is None:
        raise DataError(f"{args.data}: a label column is required")
    return data if getattr(args, "no_normalize", False) else minmax_normalize(data)


def _subset_names(data: Dataset, subset: Sequence[int]) -> str:
    return "{" + ", ".join(data.feature_names[a] for a in subset) + "}"


def _table(rows: list[list[str]]) -> str:
    widths = [max(len(r[j]) for r in rows) for j in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def cmd_scenario(args) -> int:
    data = _load(args)
    schedule = make_scenario(data, args.init, args.inc, args.seed, shuffle=not args.dataset_order)
    initial, streams = split_periods(data, schedule)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_scenario(schedule, out / "scenario.json")
    write_csv(initial, out / "initial.csv", initial.labels)
    for t, batch in enumerate(streams, start=1):
        write_csv(batch, out / f"period_{t:02d}.csv")
        with open(out / f"period_{t:02d}.labels.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label"])
            w.writerows([[int(v)] for v in batch.hidden_labels])
    counts = ",".join(str(c) for c in schedule.class_counts())
    print(f"classes per period: ({counts})")
    print(f"wrote initial.csv + {len(streams)} period files to {out}")
    return EXIT_OK


def cmd_init(args) -> int:
    cfg = RunConfig.from_args(args)
    data = _load(args)
    kb, audit = initial_learning(data, cfg.purity_threshold, cfg.seed)
    save_kb(kb, args.out)
    if args.audit:
        Path(args.audit).write_text(json.dumps([a.to_dict() for a in audit], indent=2) + "\n")
    print(f"balls: {len(kb.balls)}")
    print(f"selected: {list(kb.selected)} {_subset_names(data, kb.selected)}")
    return EXIT_OK


def cmd_step(args) -> int:
    cfg = RunConfig.from_args(args)
    kb = load_kb(args.kb)
    data = _load(args, labeled=False)
    index = args.period
    reports = Path(args.reports) if args.reports else Path(args.kb).with_name("reports.jsonl")
    if index is None:
        index = 1 + (sum(1 for _ in open(reports)) if reports.exists() else 0)
    kb, report = process_period(kb, data, cfg.dbscan_eps, cfg.dbscan_min_pts, period_index=index)
    save_kb(kb, args.kb)
    with open(reports, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(report.to_dict(timings=not args.no_timings), sort_keys=True) + "\n")
    print(f"period {index}: known={report.known_count} unknown={report.unknown_count} "
          f"noise={report.noise_count} new_labels={report.new_pseudo_labels}")
    print(f"subset: {list(report.subset_before)} -> {list(report.subset_after)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = RunConfig.from_args(args)
    data = _load(args)
    rows = [["subset", "features", "accuracy", "macro-F1"]]
    results = {}
    subsets = [("all", tuple(range(data.d)))]
    if args.kb:
        kb = load_kb(args.kb)
        if kb.d != data.d:
            raise DataError(f"knowledge base has {kb.d} features, data has {data.d}")
        subsets.insert(0, ("selected", kb.selected))
    for name, subset in subsets:
        cv = stratified_tenfold(data, subset, cfg.knn_k, cfg.seed)
        results[name] = cv.to_dict()
        rows.append([name, str(len(subset)), f"{100 * cv.mean_accuracy:.2f} ± {100 * cv.std_accuracy:.2f}",
                     f"{100 * cv.macro_f1_mean:.2f}"])
    print(_table(rows))
    if args.json:
        Path(args.json).write_text(json.dumps(results, indent=2) + "\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = RunConfig.from_args(args)
    data = _load(args)
    schedule = make_scenario(data, args.init, args.inc, cfg.seed, shuffle=not args.dataset_order)

    def progress(done, total):
        print(f"repeat {done}/{total}", file=sys.stderr)

    res = bench_continual_vs_scratch(data, schedule, cfg.purity_threshold, cfg.dbscan_eps, cfg.dbscan_min_pts,
                                     cfg.seed, args.repeats, progress if args.verbose else None)
    rows = [["period", "continual ms", "scratch ms"],
            ["0", f"{res.initial_continual_ms:.1f}", f"{res.initial_scratch_ms:.1f}"]]
    for t, (c, s) in enumerate(zip(res.per_period_continual_ms, res.per_period_scratch_ms), start=1):
        rows.append([str(t), f"{c:.1f}", f"{s:.1f}"])
    print(_table(rows))
    print(f"cumulative speedup over stream periods: {res.cumulative_speedup:.2f}x")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["period", "continual_ms", "scratch_ms"])
            w.writerows(rows[1:])
    if args.json:
        Path(args.json).write_text(json.dumps(res.to_dict(), indent=2) + "\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = RunConfig.from_args(args)
    data = _load(args)
    schedule = make_scenario(data, args.init, args.inc, cfg.seed, shuffle=not args.dataset_order)
    grid = args.grid or list(PURITY_GRID)
    for t in grid:
        RunConfig(purity_threshold=t)
    res = purity_sweep(data, schedule, grid, cfg.dbscan_eps, cfg.dbscan_min_pts, cfg.seed, cfg.knn_k, cfg.seed)
    rows = [["purity", "features", "accuracy", "macro-F1"]]
    for c in res.cells:
        rows.append([f"{c.purity_threshold:g}", str(len(c.subset)),
                     f"{100 * c.mean_accuracy:.2f} ± {100 * c.std_accuracy:.2f}", f"{100 * c.macro_f1_mean:.2f}"])
    af = res.all_features
    rows.append(["all", str(data.d), f"{100 * af.mean_accuracy:.2f} ± {100 * af.std_accuracy:.2f}",
                 f"{100 * af.macro_f1_mean:.2f}"])
    print(_table(rows))
    best = res.best
    print(f"envelope: purity {best.purity_threshold:g}, accuracy {100 * best.mean_accuracy:.2f}, "
          f"subset {_subset_names(data, best.subset)}")
    if args.json:
        Path(args.json).write_text(json.dumps(res.to_dict(), indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    purity = _env("GBCFS_PURITY", float, 0.65)
    eps = _env("GBCFS_EPS", float, 0.3)
    min_pts = _env("GBCFS_MIN_PTS", int, 10)
    k = _env("GBCFS_K", int, 3)
    seed = _env("GBCFS_SEED", int, 0)

    parser = argparse.ArgumentParser(prog="gbcfs", description="Continual granular-ball feature selection.")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_opts(p, required=True, label="-1"):
        p.add_argument("--data", required=required, help="CSV file with a header row")
        p.add_argument("--label", type=_label_arg, default=label,
                       help="label column name or index (default %(default)s)")
        p.add_argument("--delimiter", default=",")
        p.add_argument("--no-normalize", action="store_true", help="skip min-max scaling")

    def scenario_opts(p):
        p.add_argument("--init", type=float, default=0.3, help="initial class fraction")
        p.add_argument("--inc", type=float, default=0.1, help="per-period class fraction")
        p.add_argument("--dataset-order", action="store_true", help="deal classes in id order, unshuffled")

    p = sub.add_parser("scenario", help="split a dataset into initial data and stream periods")
    data_opts(p)
    scenario_opts(p)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", default="scenario", help="output directory")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("init", help="build a knowledge base from labeled data")
    data_opts(p)
    p.set_defaults(no_normalize=True)
    p.add_argument("--normalize", dest="no_normalize", action="store_false")
    p.add_argument("--purity", type=float, default=purity)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", default="kb.json")
    p.add_argument("--audit", help="write the selection audit trail as JSON")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("step", help="absorb one unlabeled stream period")
    data_opts(p, label="none")
    p.set_defaults(no_normalize=True)
    p.add_argument("--kb", required=True)
    p.add_argument("--eps", type=float, default=eps)
    p.add_argument("--min-pts", type=int, default=min_pts)
    p.add_argument("--period", type=int, help="period index (default: next after reports file)")
    p.add_argument("--reports", help="JSON-lines report file (default: reports.jsonl beside the KB)")
    p.add_argument("--no-timings", action="store_true", help="omit wall times from the report")
    p.set_defaults(func=cmd_step)

    p = sub.add_parser("eval", help="k-NN ten-fold accuracy of the selected subset and all features")
    data_opts(p)
    p.add_argument("--kb")
    p.add_argument("--k", type=int, default=k)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time continual processing against re-selection from scratch")
    data_opts(p)
    scenario_opts(p)
    p.add_argument("--purity", type=float, default=purity)
    p.add_argument("--eps", type=float, default=eps)
    p.add_argument("--min-pts", type=int, default=min_pts)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--csv", help="per-period times as CSV")
    p.add_argument("--json")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="replay a scenario over the purity grid and report the envelope")
    data_opts(p)
    scenario_opts(p)
    p.add_argument("--grid", type=float, nargs="+", help=f"purity values (default {list(PURITY_GRID)})")
    p.add_argument("--eps", type=float, default=eps)
    p.add_argument("--min-pts", type=int, default=min_pts)
    p.add_argument("--k", type=int, default=k)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--json")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        parser = build_parser()
    except ConfigError as exc:
        print(f"gbcfs: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"gbcfs: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KBFormatError as exc:
        print(f"gbcfs: knowledge base error: {exc}", file=sys.stderr)
        return EXIT_KB
    except (DataError, OSError) as exc:
        print(f"gbcfs: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
