import numpy as np
import pytest
import scipy.sparse as sp

from skiprec.graph import (
    build_bipartite_adjacency, build_graphs, build_interaction_matrix, degrees,
    extract_blocks, normalized_block, spmm, symmetric_normalize,
)
from skiprec.ingest import H, L, N, LabeledPair

from conftest import random_pairs

PAIRS = [LabeledPair(0, 0, H), LabeledPair(0, 1, L), LabeledPair(1, 1, H)]


def nonzeros(m):
    c = m.tocoo()
    return set(zip(c.row.tolist(), c.col.tolist()))


class TestInteractionMatrix:
    def test_highly(self):
        assert nonzeros(build_interaction_matrix(PAIRS, H, (2, 2))) == {(0, 0), (1, 1)}

    def test_less(self):
        assert nonzeros(build_interaction_matrix(PAIRS, L, (2, 2))) == {(0, 1)}

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            build_interaction_matrix(PAIRS, N, (2, 2))

    def test_csr_invariants(self, rng):
        m = build_interaction_matrix(random_pairs(rng, 8, 12), H, (8, 12))
        for i in range(m.shape[0]):
            cols = m.indices[m.indptr[i]:m.indptr[i + 1]]
            assert np.all(np.diff(cols) > 0)
        assert np.all(m.data == 1.0)


class TestAdjacency:
    def test_single_edge(self):
        a = build_bipartite_adjacency(sp.csr_matrix([[1.0]]))
        np.testing.assert_array_equal(a.toarray(), [[0, 1], [1, 0]])

    def test_empty(self):
        a = build_bipartite_adjacency(sp.csr_matrix((2, 3)))
        assert a.shape == (5, 5) and a.nnz == 0

    def test_symmetric_double_count(self):
        r = sp.csr_matrix(np.array([[1, 0, 1], [0, 1, 0]], dtype=float))
        a = build_bipartite_adjacency(r)
        assert a.nnz == 6
        assert (a != a.T).nnz == 0


class TestNormalize:
    def test_single_edge(self):
        a = symmetric_normalize(build_bipartite_adjacency(sp.csr_matrix([[1.0]])))
        np.testing.assert_array_equal(a.toarray(), [[0, 1], [1, 0]])

    def test_star(self):
        r = sp.csr_matrix(np.ones((1, 4)))
        a = symmetric_normalize(build_bipartite_adjacency(r))
        block, block_t = extract_blocks(a, 1, 4)
        np.testing.assert_allclose(block.toarray(), [[0.5, 0.5, 0.5, 0.5]], atol=1e-15)
        np.testing.assert_allclose(block_t.toarray(), block.toarray().T, atol=0)

    def test_isolated_nodes(self):
        r = sp.csr_matrix(np.array([[1, 0], [0, 0]], dtype=float))
        a = symmetric_normalize(build_bipartite_adjacency(r))
        dense = a.toarray()
        assert np.all(dense[1] == 0) and np.all(dense[3] == 0)
        assert np.all(np.isfinite(dense))

    def test_against_dense_formula(self, rng):
        r = (rng.random((6, 9)) < 0.3).astype(float)
        a = build_bipartite_adjacency(sp.csr_matrix(r)).toarray()
        deg = a.sum(1)
        with np.errstate(divide="ignore"):
            dinv = np.where(deg > 0, 1 / np.sqrt(deg), 0.0)
        expected = dinv[:, None] * a * dinv[None, :]
        got = symmetric_normalize(sp.csr_matrix(a)).toarray()
        np.testing.assert_allclose(got, expected, atol=1e-15)

    def test_block_entries(self, rng):
        r = sp.csr_matrix((rng.random((5, 7)) < 0.4).astype(float))
        block, block_t = normalized_block(r)
        du = np.asarray(r.sum(1)).ravel()
        dv = np.asarray(r.sum(0)).ravel()
        c = block.tocoo()
        np.testing.assert_allclose(c.data, 1 / np.sqrt(du[c.row] * dv[c.col]), rtol=1e-14)
        assert nonzeros(block_t) == {(j, i) for i, j in nonzeros(block)}


class TestBuildGraphs:
    def test_modes(self, rng):
        pairs = random_pairs(rng, 6, 10)
        counts = {c: sum(p.cls is c for p in pairs) for c in (H, L, N)}
        dual = build_graphs(pairs, 6, 10, "dual")
        assert dual.r_tilde_h.nnz == counts[H] and dual.r_tilde_l.nnz == counts[L]
        hi = build_graphs(pairs, 6, 10, "highly_only")
        assert hi.r_tilde_h.nnz == counts[H] and hi.r_tilde_l.nnz == 0
        tot = build_graphs(pairs, 6, 10, "total")
        assert tot.r_tilde_h.nnz == len(pairs) and tot.r_tilde_l.nnz == 0

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            build_graphs(PAIRS, 2, 2, "triple")

    def test_degree_counts(self):
        a = build_bipartite_adjacency(build_interaction_matrix(PAIRS, H, (2, 2)))
        np.testing.assert_array_equal(degrees(a), [1, 1, 1, 1])


class TestSpmm:
    def test_identity(self, rng):
        m = rng.normal(size=(4, 3))
        np.testing.assert_array_equal(spmm(sp.identity(4, format="csr"), m), m)

    def test_zero(self, rng):
        assert np.all(spmm(sp.csr_matrix((5, 4)), rng.normal(size=(4, 3))) == 0)

    def test_dense_oracle(self, rng):
        s = rng.normal(size=(5, 7)) * (rng.random((5, 7)) < 0.4)
        m = rng.normal(size=(7, 3))
        np.testing.assert_allclose(spmm(sp.csr_matrix(s), m), s @ m, atol=1e-12)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            spmm(sp.csr_matrix((5, 4)), rng.normal(size=(3, 3)))
