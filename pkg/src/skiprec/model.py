"""Dual-path two-hop graph convolution with an MLP preference head.

Per path p in {h, l}:

    user_p  = act(R_p   @ H_v0   @ W_p1)
    video_p = act(R_p.T @ user_p @ W_p2)

User and video embeddings are the mean of the two paths. A pair (u, v) is
scored as ``act([h_u, h_v] @ W_pred1) @ W_pred2``; the result is a raw logit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import DualGraphs, spmm

FIXED = "fixed_features"
LEARNABLE = "learnable_embeddings"
MODES = (FIXED, LEARNABLE)

GCN_WEIGHTS = ("w_h1", "w_l1", "w_h2", "w_l2")
HEAD_WEIGHTS = ("w_p1", "w_p2")
PARAM_NAMES = ("h_v0",) + GCN_WEIGHTS + HEAD_WEIGHTS


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(x):
    return (x > 0).astype(x.dtype)


def _tanh_grad(x):
    return 1.0 - np.tanh(x) ** 2


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
}


@dataclass
class ModelParams:
    h_v0: np.ndarray
    w_h1: np.ndarray
    w_l1: np.ndarray
    w_h2: np.ndarray
    w_l2: np.ndarray
    w_p1: np.ndarray
    w_p2: np.ndarray
    mode: str = FIXED
    activation: str = "relu"

    @property
    def d(self) -> int:
        return self.w_h1.shape[0]

    def trainable(self) -> tuple[str, ...]:
        if self.mode == LEARNABLE:
            return PARAM_NAMES
        return GCN_WEIGHTS + HEAD_WEIGHTS

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.arrays().items()},
                           mode=self.mode, activation=self.activation)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_params(
    d: int,
    n_users: int,
    n_videos: int,
    seed: int,
    mode: str = FIXED,
    features: np.ndarray | None = None,
    activation: str = "relu",
) -> ModelParams:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    rng = np.random.default_rng(seed)
    weights = {name: _glorot(rng, d, d) for name in GCN_WEIGHTS}
    weights["w_p1"] = _glorot(rng, 2 * d, d)
    weights["w_p2"] = _glorot(rng, d, 1)
    if mode == FIXED:
        if features is None:
            raise ValueError("fixed-feature mode requires a feature table")
        features = np.asarray(features, dtype=np.float64)
        if features.shape != (n_videos, d):
            raise ValueError(f"feature table is {features.shape}, expected {(n_videos, d)}")
        h_v0 = features.copy()
    else:
        h_v0 = rng.uniform(-0.01, 0.01, size=(n_videos, d))
    return ModelParams(h_v0=h_v0, mode=mode, activation=activation, **weights)


def propagate_user(r_tilde, h_v0, w1, activation: str = "relu") -> np.ndarray:
    act, _ = ACTIVATIONS[activation]
    return act(spmm(r_tilde, h_v0) @ w1)


def propagate_video(r_tilde_t, h_u_path, w2, activation: str = "relu") -> np.ndarray:
    act, _ = ACTIVATIONS[activation]
    return act(spmm(r_tilde_t, h_u_path) @ w2)


def fuse_mean(x_h: np.ndarray, x_l: np.ndarray) -> np.ndarray:
    if x_h.shape != x_l.shape:
        raise ValueError(f"shape mismatch: {x_h.shape} vs {x_l.shape}")
    return (x_h + x_l) / 2.0


@dataclass
class Embeddings:
    h_u_h: np.ndarray
    h_u_l: np.ndarray
    h_v_h: np.ndarray
    h_v_l: np.ndarray
    h_u: np.ndarray
    h_v: np.ndarray
    # aggregated inputs and pre-activations per path, kept for backward
    cache: dict = field(default_factory=dict, repr=False)


def forward(params: ModelParams, graphs: DualGraphs) -> Embeddings:
    act, _ = ACTIVATIONS[params.activation]
    cache = {}
    out = {}
    for path, r, r_t in (("h", graphs.r_tilde_h, graphs.r_tilde_h_t),
                         ("l", graphs.r_tilde_l, graphs.r_tilde_l_t)):
        agg1 = spmm(r, params.h_v0)
        pre1 = agg1 @ getattr(params, f"w_{path}1")
        user = act(pre1)
        agg2 = spmm(r_t, user)
        pre2 = agg2 @ getattr(params, f"w_{path}2")
        video = act(pre2)
        cache[path] = (agg1, pre1, agg2, pre2)
        out[path] = (user, video)
    return Embeddings(
        h_u_h=out["h"][0], h_u_l=out["l"][0],
        h_v_h=out["h"][1], h_v_l=out["l"][1],
        h_u=fuse_mean(out["h"][0], out["l"][0]),
        h_v=fuse_mean(out["h"][1], out["l"][1]),
        cache=cache,
    )


def predict_score(h_u_row, h_v_row, w_p1, w_p2, activation: str = "relu") -> float:
    act, _ = ACTIVATIONS[activation]
    concat = np.concatenate([h_u_row, h_v_row])
    return float((act(concat @ w_p1) @ w_p2)[0])


def score_pairs(params: ModelParams, emb: Embeddings, users, videos, return_cache=False):
    """Vectorised logits for index arrays ``users`` and ``videos``."""
    act, _ = ACTIVATIONS[params.activation]
    users = np.asarray(users, dtype=np.int64)
    videos = np.asarray(videos, dtype=np.int64)
    concat = np.concatenate([emb.h_u[users], emb.h_v[videos]], axis=1)
    pre = concat @ params.w_p1
    hidden = act(pre)
    z = (hidden @ params.w_p2)[:, 0]
    if return_cache:
        return z, (users, videos, concat, pre, hidden)
    return z


def _scatter_rows(index: np.ndarray, rows: np.ndarray, n: int) -> np.ndarray:
    # sparse one-hot product sums duplicate indices, much faster than np.add.at
    m = len(index)
    onehot = sp.csr_matrix((np.ones(m), (index, np.arange(m))), shape=(n, m))
    return np.asarray(onehot @ rows)


def backward(params: ModelParams, graphs: DualGraphs, emb: Embeddings,
             score_cache, dz: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of sum(dz * z) w.r.t. every trainable parameter."""
    _, act_grad = ACTIVATIONS[params.activation]
    users, videos, concat, pre, hidden = score_cache
    d = params.d
    grads = {}

    grads["w_p2"] = hidden.T @ dz[:, None]
    d_pre = (dz[:, None] @ params.w_p2.T) * act_grad(pre)
    grads["w_p1"] = concat.T @ d_pre
    d_concat = d_pre @ params.w_p1.T

    # mean pooling splits the gradient evenly between paths
    d_hu = 0.5 * _scatter_rows(users, d_concat[:, :d], emb.h_u.shape[0])
    d_hv = 0.5 * _scatter_rows(videos, d_concat[:, d:], emb.h_v.shape[0])

    d_h_v0 = np.zeros_like(params.h_v0) if params.mode == LEARNABLE else None
    for path, r, r_t in (("h", graphs.r_tilde_h, graphs.r_tilde_h_t),
                         ("l", graphs.r_tilde_l, graphs.r_tilde_l_t)):
        agg1, pre1, agg2, pre2 = emb.cache[path]
        w1 = getattr(params, f"w_{path}1")
        w2 = getattr(params, f"w_{path}2")
        d_pre2 = d_hv * act_grad(pre2)
        grads[f"w_{path}2"] = agg2.T @ d_pre2
        d_user = d_hu + spmm(r, d_pre2 @ w2.T)
        d_pre1 = d_user * act_grad(pre1)
        grads[f"w_{path}1"] = agg1.T @ d_pre1
        if d_h_v0 is not None:
            d_h_v0 += spmm(r_t, d_pre1 @ w1.T)
    if d_h_v0 is not None:
        grads["h_v0"] = d_h_v0
    return grads
