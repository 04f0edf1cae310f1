"""Hierarchical ranking + BCE objective, AdamW with cosine decay, training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.special import expit

from .evaluation import validation_recall
from .graph import DualGraphs
from .ingest import H, L, N, DatasetSplit, LabeledPair
from .model import ModelParams, backward, forward, score_pairs

log = logging.getLogger(__name__)

ABSENT = -1
BPR_MODES = ("hierarchical", "unseen_negative")
UNSEEN_MAX_TRIES = 100


class NumericalError(ArithmeticError):
    pass


@dataclass
class TrainConfig:
    lam: float = 0.5
    batch_size: int = 1024
    max_epochs: int = 30
    patience: int = 5
    seed: int = 0
    threshold: float = 5.0
    d: int = 128
    graph_mode: str = "dual"
    bpr_mode: str = "hierarchical"
    feature_mode: str = "fixed_features"
    activation: str = "relu"
    lr0: float = 1e-3
    lr_min: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1:
            raise ValueError("batch_size and patience must be >= 1, max_epochs >= 0")
        if self.bpr_mode not in BPR_MODES:
            raise ValueError(f"unknown bpr mode {self.bpr_mode!r}")

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in names})

    def to_dict(self) -> dict:
        return asdict(self)


# -- losses -----------------------------------------------------------------

def softplus(x):
    """ln(1 + e^x) without overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def bpr_pair_loss(z_pos, z_neg):
    """-ln sigmoid(z_pos - z_neg)."""
    return softplus(-(np.asarray(z_pos) - np.asarray(z_neg)))


def bce_loss(z, y):
    """Binary cross-entropy on a logit."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return y * softplus(-z) + (1.0 - y) * softplus(z)


def combined_loss(bpr: float, bce: float, lam: float) -> float:
    return lam * bpr + (1.0 - lam) * bce


@dataclass
class LossBreakdown:
    bpr_hl: float
    bpr_hn: float
    bpr: float
    bce: float
    combined: float
    empty_terms: tuple[str, ...] = ()


def hierarchical_bpr(z_h, z_l, z_n, has_l, has_n):
    """Per-term batch means, averaged; an empty term contributes zero."""
    z_h = np.asarray(z_h, dtype=np.float64)
    empty = []
    terms = []
    for name, z_other, present in (("bpr_hl", z_l, has_l), ("bpr_hn", z_n, has_n)):
        present = np.asarray(present, dtype=bool)
        if present.any():
            terms.append(float(np.mean(bpr_pair_loss(z_h[present], np.asarray(z_other)[present]))))
        else:
            terms.append(0.0)
            empty.append(name)
    return terms[0], terms[1], (terms[0] + terms[1]) / 2.0, tuple(empty)


# -- triplet sampling -------------------------------------------------------

@dataclass
class Pools:
    """Per-user train pools stored CSR-style: items[ptr[u]:ptr[u+1]]."""

    h_users: np.ndarray
    h_items: np.ndarray
    ptr: dict[str, np.ndarray]
    items: dict[str, np.ndarray]
    seen: np.ndarray  # sorted u * n_videos + v keys of all train pairs
    n_videos: int


def build_pools(train_pairs: list[LabeledPair], n_users: int, n_videos: int) -> Pools:
    pairs = sorted(train_pairs)
    ptr, items = {}, {}
    for cls in (L, N):
        sel = [p for p in pairs if p.cls is cls]
        counts = np.bincount([p.user_index for p in sel], minlength=n_users)
        ptr[cls.short] = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        items[cls.short] = np.array([p.video_index for p in sel], dtype=np.int64)
    hs = [p for p in pairs if p.cls is H]
    seen = np.array(sorted(p.user_index * n_videos + p.video_index for p in pairs), dtype=np.int64)
    return Pools(
        h_users=np.array([p.user_index for p in hs], dtype=np.int64),
        h_items=np.array([p.video_index for p in hs], dtype=np.int64),
        ptr=ptr, items=items, seen=seen, n_videos=n_videos,
    )


def _draw_from_pool(pools: Pools, code: str, users: np.ndarray, rng: np.random.Generator):
    start = pools.ptr[code][users]
    size = pools.ptr[code][users + 1] - start
    r = rng.random(len(users))
    offset = np.minimum((r * size).astype(np.int64), np.maximum(size - 1, 0))
    out = np.full(len(users), ABSENT, dtype=np.int64)
    has = size > 0
    out[has] = pools.items[code][start[has] + offset[has]]
    return out


def sample_triplets(pools: Pools, rng: np.random.Generator) -> np.ndarray:
    """One (u, h, l, n) row per train highly positive pair; ABSENT (-1) for empty pools."""
    users = pools.h_users
    l_items = _draw_from_pool(pools, "L", users, rng)
    n_items = _draw_from_pool(pools, "N", users, rng)
    return np.stack([users, pools.h_items, l_items, n_items], axis=1)


def sample_unseen_negatives(pools: Pools, users: np.ndarray, rng: np.random.Generator,
                            max_tries: int = UNSEEN_MAX_TRIES) -> np.ndarray:
    """Uniform videos outside each user's train interactions; ABSENT after max_tries misses."""
    out = np.full(len(users), ABSENT, dtype=np.int64)
    pending = np.arange(len(users))
    for _ in range(max_tries):
        if len(pending) == 0:
            break
        cand = rng.integers(0, pools.n_videos, size=len(pending))
        keys = users[pending] * pools.n_videos + cand
        pos = np.searchsorted(pools.seen, keys)
        pos = np.minimum(pos, max(len(pools.seen) - 1, 0))
        hit = pools.seen[pos] == keys if len(pools.seen) else np.zeros(len(keys), bool)
        out[pending[~hit]] = cand[~hit]
        pending = pending[hit]
    return out


# -- objective and gradients ------------------------------------------------

def batch_objective(params: ModelParams, graphs: DualGraphs, triplets: np.ndarray,
                    lam: float, bpr_mode: str = "hierarchical", with_grad: bool = True):
    """Combined loss of a triplet batch and, optionally, its exact gradients.

    In ``hierarchical`` mode columns are (u, h, l, n). In ``unseen_negative``
    mode column 3 holds the sampled unseen video and column 2 is ignored. BCE
    covers every sampled item: the highly positive one labeled 1, the others 0.
    """
    triplets = np.asarray(triplets, dtype=np.int64)
    if len(triplets) == 0:
        raise ValueError("empty triplet batch")
    u, h, l, n = triplets.T
    if bpr_mode == "unseen_negative":
        l = np.full_like(l, ABSENT)
    has_l, has_n = l != ABSENT, n != ABSENT
    m = len(u)
    users = np.concatenate([u, u[has_l], u[has_n]])
    videos = np.concatenate([h, l[has_l], n[has_n]])
    labels = np.concatenate([np.ones(m), np.zeros(has_l.sum() + has_n.sum())])

    emb = forward(params, graphs)
    z, cache = score_pairs(params, emb, users, videos, return_cache=True)
    z_h = z[:m]
    z_l = np.zeros(m)
    z_n = np.zeros(m)
    z_l[has_l] = z[m:m + has_l.sum()]
    z_n[has_n] = z[m + has_l.sum():]

    bce = float(np.mean(bce_loss(z, labels)))
    if bpr_mode == "hierarchical":
        bpr_hl, bpr_hn, bpr, empty = hierarchical_bpr(z_h, z_l, z_n, has_l, has_n)
        weights = (0.5, 0.5)
    else:
        bpr_hl, bpr_hn, _, empty = hierarchical_bpr(z_h, z_l, z_n, has_l, has_n)
        bpr = bpr_hn
        empty = tuple(e for e in empty if e != "bpr_hl")
        weights = (0.0, 1.0)
    breakdown = LossBreakdown(bpr_hl, bpr_hn, bpr, bce, combined_loss(bpr, bce, lam), empty)
    if not with_grad:
        return breakdown, None

    dz = (1.0 - lam) * (expit(z) - labels) / len(z)
    dz_h = np.zeros(m)
    offset = m
    for present, z_other, w in ((has_l, z_l, weights[0]), (has_n, z_n, weights[1])):
        k = int(present.sum())
        if k and w:
            # d/dx softplus(-x) = -sigmoid(-x)
            g = -expit(-(z_h[present] - z_other[present])) * (lam * w / k)
            dz_h[present] += g
            dz[offset:offset + k] -= g
        offset += k
    dz[:m] += dz_h
    grads = backward(params, graphs, emb, cache, dz)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name}")
    return breakdown, grads


# -- optimizer ---------------------------------------------------------------

def cosine_lr(step: int, total_steps: int, lr0: float = 1e-3, lr_min: float = 1e-6) -> float:
    if total_steps <= 0:
        return lr0
    c = math.cos(math.pi * step / total_steps)
    # lr_min + (lr0 - lr_min)(1 + c)/2, arranged so both endpoints are exact
    return lr0 * (1.0 + c) / 2.0 + lr_min * (1.0 - c) / 2.0


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    eps: float = 1e-8


def adamw_step(params: ModelParams, grads: dict[str, np.ndarray], state: OptimizerState,
               lr: float) -> None:
    """In-place AdamW update of the parameters named in ``grads``."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, g in grads.items():
        theta = getattr(params, name)
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        theta *= 1.0 - lr * state.weight_decay
        theta -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


# -- training loop -----------------------------------------------------------

@dataclass
class TrainResult:
    params: ModelParams
    history: list[dict]
    best_epoch: int
    stopped_early: bool


def train(config: TrainConfig, split: DatasetSplit, graphs: DualGraphs,
          params: ModelParams) -> TrainResult:
    """Minibatch training with early stopping on validation recall@3.

    Returns a copy of the parameters from the best validation epoch.
    """
    params = params.copy()
    n_users, n_videos = graphs.n_users, graphs.n_videos
    pools = build_pools(split.train, n_users, n_videos)
    rng = np.random.default_rng([config.seed, 1])
    n_triplets = len(pools.h_users)
    batches_per_epoch = math.ceil(n_triplets / config.batch_size) if n_triplets else 0
    total_steps = config.max_epochs * batches_per_epoch
    state = OptimizerState(beta1=config.beta1, beta2=config.beta2,
                           weight_decay=config.weight_decay, eps=config.eps)
    trainable = set(params.trainable())

    history: list[dict] = []
    best = params.copy()
    best_recall = -math.inf
    best_epoch = 0
    stale = 0
    step = 0
    lr = config.lr0
    for epoch in range(1, config.max_epochs + 1):
        triplets = sample_triplets(pools, rng)
        if config.bpr_mode == "unseen_negative":
            triplets[:, 3] = sample_unseen_negatives(pools, triplets[:, 0], rng)
        triplets = triplets[rng.permutation(len(triplets))]
        sums = np.zeros(4)
        n_batches = 0
        for start in range(0, len(triplets), config.batch_size):
            batch = triplets[start:start + config.batch_size]
            lr = cosine_lr(step, total_steps, config.lr0, config.lr_min)
            parts, grads = batch_objective(params, graphs, batch, config.lam, config.bpr_mode)
            adamw_step(params, {k: g for k, g in grads.items() if k in trainable}, state, lr)
            sums += (parts.combined, parts.bpr_hl, parts.bpr_hn, parts.bce)
            n_batches += 1
            step += 1
        means = sums / max(n_batches, 1)
        recall = validation_recall(params, graphs, split.validation, k=3)
        record = {
            "epoch": epoch, "lr": lr, "loss": float(means[0]), "bpr_hl": float(means[1]),
            "bpr_hn": float(means[2]), "bce": float(means[3]), "val_recall@3": recall,
        }
        history.append(record)
        log.info("epoch %d loss %.5f val recall@3 %.5f", epoch, means[0], recall)
        if recall > best_recall:
            best_recall, best_epoch, stale = recall, epoch, 0
            best = params.copy()
        else:
            stale += 1
            if stale >= config.patience:
                return TrainResult(best, history, best_epoch, True)
    return TrainResult(best, history, best_epoch, False)
