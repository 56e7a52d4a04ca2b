"""Kernel entries, dense assembly, and low-rank approximation.

The dense SVD serves as the independent accuracy oracle for the cross
approximation path throughout.
"""

import numpy as np
import pytest

from zhmat.clustering import admissible_standard, build_cluster_tree
from zhmat.geometry import build_geometry
from zhmat.kernel import (
    RHO,
    LowRankBlock,
    _aca,
    _recompress,
    assemble_dense,
    kernel_block,
    lowrank_approx,
    slp_entry,
)


@pytest.fixture(scope="module")
def sphere2():
    geom = build_geometry(2)
    tree = build_cluster_tree(geom, n_min=16)
    return geom, tree


def _admissible_pairs(tree, eta=2.0, limit=6):
    """A few admissible same-level cluster pairs, various levels."""
    pairs = []
    for level in tree.levels:
        for t in level:
            for s in level:
                if t is not s and admissible_standard(t, s, eta):
                    pairs.append((t, s))
                    break
            if pairs and pairs[-1][0] is t:
                break
    return pairs[:limit]


class TestEntry:
    def test_diagonal_value(self):
        # dist 0 <= reg: entry is w*w / (2*rho*sqrt(w)) = w**1.5 for rho=0.5
        geom = build_geometry(1)
        for i in (0, 7, 33):
            w = geom.weights[i]
            assert slp_entry(geom, i, i) == pytest.approx(w**1.5, rel=1e-14)

    def test_symmetry_and_positivity(self):
        geom = build_geometry(1)
        rng = np.random.default_rng(0)
        for i, j in rng.integers(0, geom.n, size=(20, 2)):
            a = slp_entry(geom, int(i), int(j))
            assert a > 0
            assert a == pytest.approx(slp_entry(geom, int(j), int(i)), rel=1e-15)

    def test_far_field_matches_distance_formula(self):
        geom = build_geometry(1)
        # pick a pair with distance clearly above the regularization radius
        i, j = 0, geom.n - 1
        d = np.linalg.norm(geom.points[i] - geom.points[j])
        reg = RHO * (np.sqrt(geom.weights[i]) + np.sqrt(geom.weights[j]))
        assert d > reg
        expect = geom.weights[i] * geom.weights[j] / d
        assert slp_entry(geom, i, j) == pytest.approx(expect, rel=1e-14)


class TestAssembly:
    def test_matches_entrywise_oracle(self, sphere2):
        geom, tree = sphere2
        t = tree.leaves[0]
        s = tree.leaves[len(tree.leaves) // 2]
        block = assemble_dense(geom, t, s)
        assert block.shape == (t.size, s.size)
        for a in range(0, t.size, 3):
            for b in range(0, s.size, 3):
                expect = slp_entry(geom, int(t.indices[a]), int(s.indices[b]))
                assert block[a, b] == pytest.approx(expect, rel=1e-14)

    def test_full_matrix_symmetric(self, sphere2):
        geom, tree = sphere2
        root = tree.root
        dense = assemble_dense(geom, root, root)
        assert np.allclose(dense, dense.T, rtol=1e-14, atol=0)


class TestLowRank:
    @pytest.mark.parametrize("eps", [1e-2, 1e-4, 1e-6, 1e-8])
    def test_error_against_dense_oracle(self, sphere2, eps):
        geom, tree = sphere2
        for t, s in _admissible_pairs(tree):
            lr = lowrank_approx(geom, t, s, eps)
            dense = assemble_dense(geom, t, s)
            err = np.linalg.norm(lr.evaluate() - dense)
            assert err <= eps * np.linalg.norm(dense)

    def test_factor_orthonormality(self, sphere2):
        geom, tree = sphere2
        t, s = _admissible_pairs(tree)[0]
        lr = lowrank_approx(geom, t, s, 1e-6)
        k = lr.rank
        assert np.linalg.norm(lr.w.T @ lr.w - np.eye(k)) < 1e-12
        assert np.linalg.norm(lr.x.T @ lr.x - np.eye(k)) < 1e-12
        assert np.all(np.diff(lr.sigma) <= 1e-15)
        assert np.all(lr.sigma > 0)

    def test_sigma_matches_svd_oracle(self, sphere2):
        geom, tree = sphere2
        t, s = _admissible_pairs(tree)[0]
        lr = lowrank_approx(geom, t, s, 1e-8)
        dense = assemble_dense(geom, t, s)
        true_sigma = np.linalg.svd(dense, compute_uv=False)
        k = lr.rank
        np.testing.assert_allclose(lr.sigma, true_sigma[:k], rtol=1e-6)

    def test_rank_monotone_in_eps(self, sphere2):
        geom, tree = sphere2
        t, s = _admissible_pairs(tree)[0]
        ranks = [lowrank_approx(geom, t, s, eps).rank for eps in (1e-2, 1e-4, 1e-6, 1e-8)]
        assert ranks == sorted(ranks)

    def test_coarsest_eps_keeps_rank_one(self, sphere2):
        geom, tree = sphere2
        t, s = _admissible_pairs(tree)[0]
        lr = lowrank_approx(geom, t, s, 1.0)
        assert lr.rank >= 1

    def test_uv_property(self, sphere2):
        geom, tree = sphere2
        t, s = _admissible_pairs(tree)[0]
        lr = lowrank_approx(geom, t, s, 1e-6)
        np.testing.assert_allclose(lr.u @ lr.v.T, lr.evaluate(), rtol=1e-14)

    def test_rejects_bad_eps(self, sphere2):
        geom, tree = sphere2
        t, s = _admissible_pairs(tree)[0]
        with pytest.raises(ValueError):
            lowrank_approx(geom, t, s, 0.0)


class TestAcaSynthetic:
    def _run(self, matrix, tol):
        m, n = matrix.shape
        U, V = _aca(lambda i: matrix[i].copy(), lambda j: matrix[:, j].copy(), m, n, tol, min(m, n))
        return U, V

    def test_exact_rank_one(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal(40)
        b = rng.standard_normal(25)
        M = np.outer(a, b)
        U, V = self._run(M, 1e-10)
        assert np.linalg.norm(U @ V.T - M) <= 1e-12 * np.linalg.norm(M)
        lr = _recompress(U, V, 1e-10)
        assert lr.rank == 1

    def test_exact_low_rank(self):
        rng = np.random.default_rng(2)
        A = rng.standard_normal((50, 4))
        B = rng.standard_normal((30, 4))
        M = A @ B.T
        U, V = self._run(M, 1e-12)
        assert np.linalg.norm(U @ V.T - M) <= 1e-10 * np.linalg.norm(M)
        lr = _recompress(U, V, 1e-12)
        assert lr.rank == 4

    def test_recompression_never_exceeds_raw_rank(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((60, 10))
        B = rng.standard_normal((45, 10))
        M = A @ B.T
        U, V = self._run(M, 1e-12)
        lr = _recompress(U, V, 1e-6)
        assert lr.rank <= U.shape[1]
        err = np.linalg.norm(lr.evaluate() - U @ V.T)
        assert err <= 1e-6 * np.linalg.norm(M)
