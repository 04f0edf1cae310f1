"""End-to-end helpers shared by the CLI: data loading, single runs, experiments."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .evaluation import METRICS, MetricsReport, evaluate
from .graph import build_graphs
from .ingest import (
    DataError, DatasetSplit, IdMaps, InteractionClass, LabeledPair, class_histogram,
    deduplicate_and_label, load_features, parse_interactions, split_per_user, split_sizes,
)
from .model import FIXED, init_params
from .optim import TrainConfig, TrainResult, train
from .stats import paired_t_test

log = logging.getLogger(__name__)

# variant name -> (graph_mode, bpr_mode)
VARIANTS = {
    "dual": ("dual", "hierarchical"),
    "total": ("total", "hierarchical"),
    "highly_only": ("highly_only", "hierarchical"),
    "hierarchical": ("dual", "hierarchical"),
    "unseen_negative": ("dual", "unseen_negative"),
}


@dataclass
class Dataset:
    id_maps: IdMaps
    pairs: list[LabeledPair]
    features: np.ndarray | None


def load_dataset(interactions, features=None, threshold: float = 5.0,
                 d: int | None = None) -> Dataset:
    """Parse interactions and optional features, each given as a path or bytes."""
    interactions = parse_interactions(_open(interactions))
    id_maps = IdMaps.from_interactions(interactions)
    pairs = deduplicate_and_label(interactions, id_maps, threshold)
    table = None
    if features is not None:
        table = load_features(_open(features), id_maps, d)
    return Dataset(id_maps, pairs, table)


def _open(source):
    """Paths are read from disk; bytes pass through unchanged."""
    if isinstance(source, (bytes, bytearray)):
        return source
    return Path(source).read_bytes()


# -- split manifest ----------------------------------------------------------

MANIFEST_HEADER = ["user_id", "video_id", "user_index", "video_index", "class", "split"]


def write_manifest(path: Path, split: DatasetSplit, id_maps: IdMaps) -> None:
    users, videos = id_maps.user_ids(), id_maps.video_ids()
    rows = []
    for name, pairs in (("train", split.train), ("validation", split.validation),
                        ("test", split.test)):
        rows.extend((p.user_index, p.video_index, p.cls.short, name) for p in pairs)
    rows.sort()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for u, v, c, name in rows:
            w.writerow([users[u], videos[v], u, v, c, name])


def read_manifest(path, seed: int = 0) -> tuple[DatasetSplit, IdMaps]:
    parts = {"train": [], "validation": [], "test": []}
    id_maps = IdMaps()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise DataError(f"{path}: not a split manifest")
        for line, row in enumerate(reader, start=2):
            try:
                uid, vid, u, v, c, name = row
                u, v = int(u), int(v)
                pair = LabeledPair(u, v, InteractionClass.from_short(c))
                parts[name].append(pair)
            except (ValueError, KeyError) as exc:
                raise DataError(f"{path}:{line}: bad manifest row ({exc})") from None
            id_maps.users.setdefault(uid, u)
            id_maps.videos.setdefault(vid, v)
    for name in parts:
        parts[name].sort()
    return DatasetSplit(parts["train"], parts["validation"], parts["test"], seed), id_maps


def split_stats(split: DatasetSplit) -> dict:
    counts: dict[int, list[int]] = {}
    for i, pairs in enumerate((split.train, split.validation, split.test)):
        for p in pairs:
            counts.setdefault(p.user_index, [0, 0, 0])[i] += 1
    rule_ok = all(tuple(c) == split_sizes(sum(c)) for c in counts.values())
    return {
        "split_seed": split.split_seed,
        "n_users": len(counts),
        "pairs": {"train": len(split.train), "validation": len(split.validation),
                  "test": len(split.test)},
        "classes": {"train": class_histogram(split.train),
                    "validation": class_histogram(split.validation),
                    "test": class_histogram(split.test)},
        "per_user_floor_rule": rule_ok,
    }


# -- single run --------------------------------------------------------------

@dataclass
class RunOutput:
    result: TrainResult
    report: MetricsReport


def run_once(config: TrainConfig, split: DatasetSplit, n_users: int, n_videos: int,
             features: np.ndarray | None, ks=(3, 5), relevant=frozenset({InteractionClass.HIGHLY_POSITIVE}),
             variant: str | None = None) -> RunOutput:
    graphs = build_graphs(split.train, n_users, n_videos, config.graph_mode)
    params = init_params(config.d, n_users, n_videos, config.seed, config.feature_mode,
                         features if config.feature_mode == FIXED else None, config.activation)
    result = train(config, split, graphs, params)
    report = evaluate(result.params, graphs, split.test, ks, relevant, config.seed, variant)
    return RunOutput(result, report)


def write_history(path: Path, history: list[dict]) -> None:
    with open(path, "w") as fh:
        for rec in history:
            fh.write(json.dumps(rec) + "\n")


def metrics_csv(reports: list[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "seed", "metric", "k", "value"])
    for r in reports:
        for k in sorted({k for _, k in r.means}):
            for m in METRICS:
                w.writerow([r.variant, r.seed, m, k, repr(r.means[(m, k)])])
    return buf.getvalue()


def report_json(report: MetricsReport) -> dict:
    return {
        "variant": report.variant, "seed": report.seed,
        "n_users": report.n_users, "n_excluded_users": report.n_excluded,
        "metrics": {f"{m}@{k}": {"mean": report.means[(m, k)], "std": report.stds[(m, k)]}
                    for (m, k) in report.means},
    }


# -- experiments -------------------------------------------------------------

def _cell(args):
    base, variant, seed, dataset, ks, relevant, outdir = args
    graph_mode, bpr_mode = VARIANTS[variant]
    config = TrainConfig.from_dict({**base.to_dict(), "seed": seed,
                                    "graph_mode": graph_mode, "bpr_mode": bpr_mode})
    split = split_per_user(dataset.pairs, seed=seed)
    out = run_once(config, split, dataset.id_maps.n_users, dataset.id_maps.n_videos,
                   dataset.features, ks, relevant, variant)
    if outdir is not None:
        cell_dir = Path(outdir) / variant / str(seed)
        cell_dir.mkdir(parents=True, exist_ok=True)
        checkpoint.save(cell_dir / "checkpoint.json", out.result.params, config.to_dict())
        write_history(cell_dir / "history.jsonl", out.result.history)
        (cell_dir / "metrics.csv").write_text(metrics_csv([out.report]))
    return variant, seed, out.report, out.result.best_epoch, len(out.result.history)


def run_experiment(base: TrainConfig, dataset: Dataset, variants: list[str], seeds: list[int],
                   ks=(3, 5), relevant=frozenset({InteractionClass.HIGHLY_POSITIVE}),
                   outdir=None, jobs: int = 1) -> dict:
    """Every variant on the same per-seed split; aggregates and paired t-tests.

    The first variant is the reference every other variant is tested against.
    """
    if len(variants) < 2:
        raise ValueError("an experiment needs at least two variants")
    if len(seeds) < 2:
        raise ValueError("paired t-tests need at least two repeats")
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}; choose from {sorted(VARIANTS)}")
    cells = [(base, v, s, dataset, tuple(ks), relevant, outdir) for v in variants for s in seeds]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_cell, cells))
    else:
        results = []
        for cell in cells:
            results.append(_cell(cell))
            log.info("finished %s seed %s", cell[1], cell[2])
    reports = {(v, s): rep for v, s, rep, _, _ in results}
    ordered = [reports[(v, s)] for v in variants for s in seeds]

    summary = {"variants": variants, "seeds": seeds, "ks": list(ks), "metrics": {}, "ttests": {}}
    keys = list(ordered[0].means)
    for v in variants:
        summary["metrics"][v] = {
            f"{m}@{k}": {
                "mean": float(np.mean([reports[(v, s)].means[(m, k)] for s in seeds])),
                "std": float(np.std([reports[(v, s)].means[(m, k)] for s in seeds], ddof=1)),
            }
            for (m, k) in keys
        }
    ref = variants[0]
    for v in variants[1:]:
        tests = {}
        for (m, k) in keys:
            res = paired_t_test([reports[(ref, s)].means[(m, k)] for s in seeds],
                                [reports[(v, s)].means[(m, k)] for s in seeds])
            tests[f"{m}@{k}"] = {"t": res.t, "df": res.df, "p": res.p,
                                 "degenerate": res.degenerate}
        summary["ttests"][f"{ref}_vs_{v}"] = tests
    summary["epochs"] = {f"{v}/{s}": {"best_epoch": b, "epochs_run": e}
                         for v, s, _, b, e in results}
    return {"summary": summary, "reports": ordered, "csv": metrics_csv(ordered)}
