"""Container tests: construction accuracy, nestedness, memory, compression."""

import numpy as np
import pytest

from zhmat.clustering import (
    BLOCK_LOWRANK,
    admissible_standard,
    admissible_weak,
    build_block_tree,
    build_cluster_tree,
)
from zhmat.fpcodec import ValrBlock, ValrFactor
from zhmat.formats import (
    ClusterBasis,
    CompressedCoupling,
    CompressedDense,
    CompressedLowRank,
    Coupling,
    H2Matrix,
    HMatrix,
    MemoryBreakdown,
    UniformHMatrix,
    basis_matrix,
    build_h2,
    build_hmatrix,
    build_uniform,
    compress_matrix,
    materialize_basis,
    memory_footprint,
    to_dense,
)
from zhmat.geometry import build_geometry
from zhmat.kernel import DenseBlock, LowRankBlock, assemble_dense


@pytest.fixture(scope="module")
def problem():
    geom = build_geometry(2)  # 320 panels
    ct = build_cluster_tree(geom, 16)
    bt = build_block_tree(ct, ct, admissible_standard)
    dense = assemble_dense(geom, ct.root, ct.root)
    return geom, ct, bt, dense


@pytest.fixture(scope="module")
def built(problem):
    geom, ct, bt, dense = problem
    eps = 1e-6
    h = build_hmatrix(geom, bt, eps)
    uh = build_uniform(h, eps)
    h2 = build_h2(uh, eps)
    return h, uh, h2


class TestHMatrix:
    def test_every_leaf_has_matching_payload(self, problem, built):
        geom, ct, bt, dense = problem
        h, _, _ = built
        assert len(h.payloads) == len(bt.leaves)
        for leaf in bt.leaves:
            payload = h.payloads[leaf.leaf_id]
            if leaf.kind == BLOCK_LOWRANK:
                assert isinstance(payload, LowRankBlock)
            else:
                assert isinstance(payload, DenseBlock)
            assert payload.shape == leaf.shape

    def test_global_error(self, problem, built):
        _, _, _, dense = problem
        h, _, _ = built
        err = np.linalg.norm(to_dense(h) - dense) / np.linalg.norm(dense)
        assert err <= 1e-5  # practical bound for eps=1e-6

    def test_all_dense_tree_is_exact(self, problem):
        geom, ct, _, dense = problem
        never = lambda t, s: False
        bt = build_block_tree(ct, ct, never)
        h = build_hmatrix(geom, bt, 1e-6)
        assert all(isinstance(p, DenseBlock) for p in h.payloads)
        assert np.array_equal(to_dense(h), dense)

    def test_weak_admissibility_offdiagonal_lowrank(self):
        geom = build_geometry(2)
        ct = build_cluster_tree(geom, 64)
        bt = build_block_tree(ct, ct, admissible_weak)
        for leaf in bt.leaves:
            if leaf.row.index != leaf.col.index:
                assert leaf.kind == BLOCK_LOWRANK

    def test_invalid_eps(self, problem):
        geom, ct, bt, _ = problem
        with pytest.raises(ValueError):
            build_hmatrix(geom, bt, 0.0)


class TestUniform:
    def test_bases_orthonormal(self, built):
        _, uh, _ = built
        checked = 0
        for bases in (uh.row_bases, uh.col_bases):
            for cb in bases.values():
                if cb.rank == 0:
                    continue
                m = basis_matrix(cb)
                dev = np.max(np.abs(m.T @ m - np.eye(cb.rank)))
                assert dev <= 1e-12
                assert np.all(cb.sigma > 0)
                checked += 1
        assert checked > 0

    def test_coupling_shapes_match_ranks(self, built):
        _, uh, _ = built
        for leaf in uh.tree.leaves:
            if leaf.kind != BLOCK_LOWRANK:
                continue
            s = uh.payloads[leaf.leaf_id]
            assert isinstance(s, Coupling)
            assert s.shape == (
                uh.row_bases[leaf.row.index].rank,
                uh.col_bases[leaf.col.index].rank,
            )

    def test_per_leaf_reconstruction(self, built):
        # reconstruction through the shared bases stays within 3 eps of the
        # flat payload, blockwise
        h, uh, _ = built
        eps = 1e-6
        for leaf in uh.tree.leaves:
            if leaf.kind != BLOCK_LOWRANK:
                continue
            ref = h.payloads[leaf.leaf_id].evaluate()
            u_t = basis_matrix(uh.row_bases[leaf.row.index])
            v_s = basis_matrix(uh.col_bases[leaf.col.index])
            rec = u_t @ uh.payloads[leaf.leaf_id].values @ v_s.T
            assert np.linalg.norm(rec - ref) <= 3.0 * eps * max(np.linalg.norm(ref), 1e-300)

    def test_single_block_row_spans_same_subspace(self):
        # a cluster appearing in exactly one low-rank block keeps that
        # block's row space: projection error <= eps * ||w sigma||
        geom = build_geometry(2)
        ct = build_cluster_tree(geom, 64)
        bt = build_block_tree(ct, ct, admissible_weak)
        eps = 1e-8
        h = build_hmatrix(geom, bt, eps)
        uh = build_uniform(h, eps)
        counts = {}
        for leaf in bt.leaves:
            if leaf.kind == BLOCK_LOWRANK:
                counts[leaf.row.index] = counts.get(leaf.row.index, 0) + 1
        singles = [i for i, c in counts.items() if c == 1]
        assert singles
        for i in singles:
            (leaf,) = [
                b for b in bt.row_lists[i] if b.kind == BLOCK_LOWRANK
            ]
            blk = h.payloads[leaf.leaf_id]
            w_t = basis_matrix(uh.row_bases[i])
            scaled = blk.w * blk.sigma
            err = np.linalg.norm(w_t @ (w_t.T @ scaled) - scaled)
            assert err <= eps * np.linalg.norm(scaled) + 1e-14

    def test_no_admissible_leaves_all_rank_zero(self, problem):
        geom, ct, _, dense = problem
        bt = build_block_tree(ct, ct, lambda t, s: False)
        h = build_hmatrix(geom, bt, 1e-6)
        uh = build_uniform(h, 1e-6)
        assert all(cb.rank == 0 for cb in uh.row_bases.values())
        assert all(cb.rank == 0 for cb in uh.col_bases.values())
        assert np.array_equal(to_dense(uh), dense)

    def test_global_error(self, problem, built):
        _, _, _, dense = problem
        _, uh, _ = built
        err = np.linalg.norm(to_dense(uh) - dense) / np.linalg.norm(dense)
        assert err <= 1e-5


class TestH2:
    def test_leaf_bases_explicit_inner_transfers(self, built):
        _, _, h2 = built
        for bases, tree in (
            (h2.row_bases, h2.tree.row_tree),
            (h2.col_bases, h2.tree.col_tree),
        ):
            for cluster in tree.clusters:
                cb = bases[cluster.index]
                if cluster.is_leaf:
                    assert cb.matrix is not None and cb.transfers is None
                else:
                    assert cb.matrix is None
                    assert len(cb.transfers) == len(cluster.children)
                    for child, e in zip(cluster.children, cb.transfers):
                        assert e.shape == (bases[child.index].rank, cb.rank)

    def test_nested_orthonormality(self, built):
        # the recomposed basis of every cluster is orthonormal within 1e-10
        _, _, h2 = built
        for bases, tree in (
            (h2.row_bases, h2.tree.row_tree),
            (h2.col_bases, h2.tree.col_tree),
        ):
            for cluster in tree.clusters:
                cb = bases[cluster.index]
                if cb.rank == 0:
                    continue
                m = materialize_basis(h2, bases, cluster)
                dev = np.max(np.abs(m.T @ m - np.eye(cb.rank)))
                assert dev <= 1e-10

    def test_per_leaf_reconstruction(self, built):
        h, _, h2 = built
        eps = 1e-6
        row_exp = {}
        col_exp = {}
        for leaf in h2.tree.leaves:
            if leaf.kind != BLOCK_LOWRANK:
                continue
            i, j = leaf.row.index, leaf.col.index
            if i not in row_exp:
                row_exp[i] = materialize_basis(h2, h2.row_bases, leaf.row)
            if j not in col_exp:
                col_exp[j] = materialize_basis(h2, h2.col_bases, leaf.col)
            ref = h.payloads[leaf.leaf_id].evaluate()
            rec = row_exp[i] @ h2.payloads[leaf.leaf_id].values @ col_exp[j].T
            assert np.linalg.norm(rec - ref) <= 5.0 * eps * max(np.linalg.norm(ref), 1e-300)

    def test_two_level_nestedness_exact(self):
        # two-level tree: root basis rows trivially lie in the child spans,
        # so the recomposition is exact to near machine precision
        geom = build_geometry(2)
        ct = build_cluster_tree(geom, 256)  # 320 -> 160/160, depth 2
        root = ct.root
        assert not root.is_leaf and all(c.is_leaf for c in root.children)
        bt = build_block_tree(ct, ct, admissible_weak)
        eps = 1e-6
        uh = build_uniform(build_hmatrix(geom, bt, eps), eps)
        h2 = build_h2(uh, eps)
        assert h2.row_bases[root.index].rank == 0
        assert any(h2.row_bases[c.index].rank > 0 for c in root.children)
        err = np.linalg.norm(to_dense(h2) - to_dense(uh))
        assert err <= 1e-12 * np.linalg.norm(to_dense(uh))

    def test_rank_zero_everywhere(self, problem):
        geom, ct, _, dense = problem
        bt = build_block_tree(ct, ct, lambda t, s: False)
        uh = build_uniform(build_hmatrix(geom, bt, 1e-6), 1e-6)
        h2 = build_h2(uh, 1e-6)
        for bases in (h2.row_bases, h2.col_bases):
            for cb in bases.values():
                assert cb.rank == 0
                if cb.transfers is not None:
                    assert all(e.size == 0 for e in cb.transfers)
        assert np.array_equal(to_dense(h2), dense)

    def test_global_error(self, problem, built):
        _, _, _, dense = problem
        _, _, h2 = built
        err = np.linalg.norm(to_dense(h2) - dense) / np.linalg.norm(dense)
        assert err <= 1e-5


class TestMemory:
    def test_dense_block_bytes(self):
        mb = MemoryBreakdown(dense=80_000)
        assert mb.total == 80_000
        blk = DenseBlock(np.zeros((100, 100)))
        assert blk.nbytes_payload == 80_000

    def test_lowrank_block_bytes(self):
        blk = LowRankBlock(np.zeros((100, 5)), np.zeros((100, 5)), np.ones(5))
        assert blk.nbytes_payload == 8_000

    def test_footprint_matches_payloads(self, built):
        h, uh, h2 = built
        mb_h = memory_footprint(h)
        expect_dense = sum(
            p.nbytes_payload for p in h.payloads if isinstance(p, DenseBlock)
        )
        expect_lr = sum(
            p.nbytes_payload for p in h.payloads if isinstance(p, LowRankBlock)
        )
        assert mb_h.dense == expect_dense
        assert mb_h.lowrank == expect_lr
        assert mb_h.coupling == mb_h.basis == mb_h.transfer == 0

        mb_uh = memory_footprint(uh)
        assert mb_uh.dense == expect_dense
        assert mb_uh.lowrank == 0
        assert mb_uh.coupling > 0 and mb_uh.basis > 0 and mb_uh.transfer == 0

        mb_h2 = memory_footprint(h2)
        assert mb_h2.transfer > 0
        # nested explicit storage never exceeds the shared explicit storage
        assert mb_h2.basis <= mb_uh.basis

    def test_compression_shrinks_footprint(self, built):
        h, uh, h2 = built
        for mat in (h, uh, h2):
            plain = memory_footprint(mat).payload_total
            packed = memory_footprint(compress_matrix(mat, "fpx")).payload_total
            assert packed < plain


class TestCompressedContainers:
    @pytest.mark.parametrize("scheme", ["aflp", "fpx"])
    @pytest.mark.parametrize("valr", [False, True])
    def test_error_stays_near_eps(self, problem, built, scheme, valr):
        _, _, _, dense = problem
        dn = np.linalg.norm(dense)
        for mat in built:
            cm = compress_matrix(mat, scheme, valr)
            err = np.linalg.norm(to_dense(cm) - dense) / dn
            assert err <= 10.0 * 1e-6

    def test_payload_types(self, built):
        h, uh, h2 = built
        ch = compress_matrix(h, "aflp")
        assert any(isinstance(p, CompressedDense) for p in ch.payloads)
        assert any(isinstance(p, CompressedLowRank) for p in ch.payloads)
        cv = compress_matrix(h, "aflp", valr=True)
        assert any(isinstance(p, ValrBlock) for p in cv.payloads)

        cuh = compress_matrix(uh, "fpx", valr=True)
        assert any(isinstance(p, CompressedCoupling) for p in cuh.payloads)
        ranked = [cb for cb in cuh.row_bases.values() if cb.rank]
        assert ranked and all(isinstance(cb.matrix, ValrFactor) for cb in ranked)

        ch2 = compress_matrix(h2, "fpx", valr=True)
        for bases, tree in (
            (ch2.row_bases, ch2.tree.row_tree),
            (ch2.col_bases, ch2.tree.col_tree),
        ):
            for cluster in tree.clusters:
                cb = bases[cluster.index]
                if cluster.is_leaf and cb.rank:
                    assert isinstance(cb.matrix, ValrFactor)
                if not cluster.is_leaf and cb.rank:
                    # transfers must never be rate-adaptive
                    assert all(not isinstance(e, ValrFactor) for e in cb.transfers)

    def test_compress_preserves_structure(self, built):
        h, _, _ = built
        cm = compress_matrix(h, "fpx")
        assert cm.tree is h.tree
        assert cm.eps == h.eps
        assert len(cm.payloads) == len(h.payloads)
