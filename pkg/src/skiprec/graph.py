"""Bipartite interaction graphs and their symmetric normalization.

Sparse storage is scipy CSR with sorted, duplicate-free column indices and no
explicit zeros. Normalization and block extraction are done here by hand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .ingest import H, L, N, InteractionClass, LabeledPair


def _canonical(m) -> sp.csr_matrix:
    m = sp.csr_matrix(m, dtype=np.float64)
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


def build_interaction_matrix(
    pairs: Iterable[LabeledPair],
    classes: InteractionClass | Iterable[InteractionClass],
    dims: tuple[int, int],
) -> sp.csr_matrix:
    """Binary |U| x |V| matrix with a 1 for every pair of the requested class(es)."""
    wanted = {classes} if isinstance(classes, InteractionClass) else set(classes)
    if N in wanted and len(wanted) == 1:
        raise ValueError("negative interactions never enter a graph")
    rows, cols = [], []
    for p in pairs:
        if p.cls in wanted:
            rows.append(p.user_index)
            cols.append(p.video_index)
    data = np.ones(len(rows))
    m = sp.coo_matrix((data, (rows, cols)), shape=dims).tocsr()
    m.data[:] = 1.0  # collapse duplicates to binary
    return _canonical(m)


def build_bipartite_adjacency(r: sp.spmatrix) -> sp.csr_matrix:
    """[[0, R], [R^T, 0]] over users followed by videos."""
    n_users, n_videos = r.shape
    upper = sp.hstack([sp.csr_matrix((n_users, n_users)), r])
    lower = sp.hstack([r.T, sp.csr_matrix((n_videos, n_videos))])
    return _canonical(sp.vstack([upper, lower]))


def degrees(a: sp.csr_matrix) -> np.ndarray:
    """Non-zero count per row."""
    return np.diff(a.indptr)


def symmetric_normalize(a: sp.csr_matrix) -> sp.csr_matrix:
    """A_ij / sqrt(d_i d_j); rows of isolated nodes stay empty."""
    a = _canonical(a)
    deg = degrees(a).astype(np.float64)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    rows = np.repeat(np.arange(a.shape[0]), np.diff(a.indptr))
    out = a.copy()
    out.data = a.data * inv_sqrt[rows] * inv_sqrt[a.indices]
    return out


def extract_blocks(a_tilde: sp.csr_matrix, n_users: int, n_videos: int):
    """Top-right user x video block of a normalized adjacency and its transpose."""
    block = _canonical(a_tilde[:n_users, n_users:n_users + n_videos])
    return block, _canonical(block.T)


def spmm(s: sp.spmatrix, m: np.ndarray) -> np.ndarray:
    if s.shape[1] != m.shape[0]:
        raise ValueError(f"shape mismatch: {s.shape} @ {m.shape}")
    return np.asarray(s @ m)


@dataclass
class DualGraphs:
    r_tilde_h: sp.csr_matrix
    r_tilde_h_t: sp.csr_matrix
    r_tilde_l: sp.csr_matrix
    r_tilde_l_t: sp.csr_matrix

    @property
    def n_users(self) -> int:
        return self.r_tilde_h.shape[0]

    @property
    def n_videos(self) -> int:
        return self.r_tilde_h.shape[1]


def normalized_block(r: sp.csr_matrix):
    n_users, n_videos = r.shape
    a_tilde = symmetric_normalize(build_bipartite_adjacency(r))
    return extract_blocks(a_tilde, n_users, n_videos)


GRAPH_MODES = ("dual", "total", "highly_only")


def build_graphs(
    train_pairs: list[LabeledPair],
    n_users: int,
    n_videos: int,
    graph_mode: str = "dual",
) -> DualGraphs:
    """Normalized graphs for the two propagation paths.

    ``dual`` puts highly positive pairs on the first path and less positive on
    the second; ``highly_only`` leaves the second path empty; ``total`` puts
    every train pair (all three classes) on the first path and leaves the
    second empty.
    """
    dims = (n_users, n_videos)
    if graph_mode == "dual":
        r_h = build_interaction_matrix(train_pairs, H, dims)
        r_l = build_interaction_matrix(train_pairs, L, dims)
    elif graph_mode == "highly_only":
        r_h = build_interaction_matrix(train_pairs, H, dims)
        r_l = _canonical(sp.csr_matrix(dims))
    elif graph_mode == "total":
        r_h = build_interaction_matrix(train_pairs, (H, L, N), dims)
        r_l = _canonical(sp.csr_matrix(dims))
    else:
        raise ValueError(f"unknown graph mode {graph_mode!r}")
    return DualGraphs(*normalized_block(r_h), *normalized_block(r_l))
