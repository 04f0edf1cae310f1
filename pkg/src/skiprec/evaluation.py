"""Top-k ranking metrics over each user's held-out candidates."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .graph import DualGraphs
from .ingest import H, InteractionClass, LabeledPair
from .model import ModelParams, forward, score_pairs

METRICS = ("precision", "recall", "map", "ndcg")


@dataclass
class RankedList:
    user: int
    videos: np.ndarray
    relevant: np.ndarray  # bool, aligned with videos

    @property
    def n_relevant(self) -> int:
        return int(self.relevant.sum())


def rank_user(user: int, videos, logits, relevant) -> RankedList:
    """Sort by logit descending; ties go to the smaller video index."""
    videos = np.asarray(videos, dtype=np.int64)
    logits = np.asarray(logits, dtype=np.float64)
    relevant = np.asarray(relevant, dtype=bool)
    order = np.lexsort((videos, -logits))
    return RankedList(user, videos[order], relevant[order])


def _hits(r: RankedList, k: int) -> int:
    return int(r.relevant[:k].sum())


def precision_at_k(r: RankedList, k: int) -> float:
    return _hits(r, k) / k


def recall_at_k(r: RankedList, k: int) -> float:
    return _hits(r, k) / r.n_relevant


def map_at_k(r: RankedList, k: int) -> float:
    rel = r.relevant[:k]
    if not rel.any():
        return 0.0
    precisions = np.cumsum(rel) / np.arange(1, len(rel) + 1)
    return float(np.sum(precisions[rel]) / min(r.n_relevant, k))


def ndcg_at_k(r: RankedList, k: int) -> float:
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    rel = r.relevant[:k]
    dcg = float(np.sum(discounts[:len(rel)][rel]))
    idcg = float(np.sum(discounts[:min(r.n_relevant, k)]))
    return dcg / idcg


METRIC_FUNCS = {
    "precision": precision_at_k,
    "recall": recall_at_k,
    "map": map_at_k,
    "ndcg": ndcg_at_k,
}


@dataclass
class MetricsReport:
    means: dict[tuple[str, int], float]
    stds: dict[tuple[str, int], float]
    n_users: int
    n_excluded: int
    seed: int | None = None
    variant: str | None = None
    per_user: dict[tuple[str, int], np.ndarray] = field(default_factory=dict, repr=False)

    def rows(self) -> list[tuple[str, int, float]]:
        return [(m, k, self.means[(m, k)]) for (m, k) in self.means]


class NoEligibleUsers(ValueError):
    pass


def ranked_lists(params: ModelParams, graphs: DualGraphs, pairs: Iterable[LabeledPair],
                 relevant_classes: frozenset[InteractionClass] = frozenset({H})):
    """(ranked lists of users with a relevant candidate, number of users skipped)."""
    by_user: dict[int, list[LabeledPair]] = defaultdict(list)
    for p in pairs:
        by_user[p.user_index].append(p)
    if not by_user:
        return [], 0
    emb = forward(params, graphs)
    users = np.array([p.user_index for u in sorted(by_user) for p in by_user[u]])
    videos = np.array([p.video_index for u in sorted(by_user) for p in by_user[u]])
    logits = score_pairs(params, emb, users, videos)
    lists, excluded, pos = [], 0, 0
    for u in sorted(by_user):
        cand = by_user[u]
        rel = [p.cls in relevant_classes for p in cand]
        seg = slice(pos, pos + len(cand))
        pos += len(cand)
        if not any(rel):
            excluded += 1
            continue
        lists.append(rank_user(u, videos[seg], logits[seg], rel))
    return lists, excluded


def evaluate(params: ModelParams, graphs: DualGraphs, pairs: Iterable[LabeledPair],
             ks=(3, 5), relevant_classes=frozenset({H}), seed=None, variant=None) -> MetricsReport:
    """Macro-averaged metrics; users without a relevant candidate are excluded."""
    lists, excluded = ranked_lists(params, graphs, pairs, frozenset(relevant_classes))
    if not lists:
        raise NoEligibleUsers("no user has a relevant candidate")
    means, stds, per_user = {}, {}, {}
    for k in ks:
        for name in METRICS:
            vals = np.array([METRIC_FUNCS[name](r, k) for r in lists])
            per_user[(name, k)] = vals
            means[(name, k)] = float(np.mean(vals))
            stds[(name, k)] = float(np.std(vals))
    return MetricsReport(means, stds, len(lists), excluded, seed, variant, per_user)


def validation_recall(params: ModelParams, graphs: DualGraphs, pairs, k: int = 3) -> float:
    lists, _ = ranked_lists(params, graphs, pairs)
    if not lists:
        return math.nan
    return float(np.mean([recall_at_k(r, k) for r in lists]))
