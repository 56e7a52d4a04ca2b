"""Hierarchical matrix containers and their basis constructions.

Three storage formats over one block tree:

* flat format: every admissible leaf holds its own low-rank factor pair,
  inadmissible leaves hold dense blocks;
* shared-basis format: each cluster owns one explicit orthonormal basis
  spanning the row (column) factors of every low-rank block in its block
  row (column); admissible leaves shrink to small coupling matrices;
* nested-basis format: explicit bases survive only at leaf clusters, inner
  clusters store per-child transfer matrices that rebuild the parent basis
  from its children.

Shared bases come from a truncated SVD of the singular-value-scaled factor
stack, each block normalized to unit Frobenius weight so the truncation
tail bounds every block's projection error relative to its own norm.

Nested bases are derived from shared ones in a single top-down sweep: each
cluster keeps its own shared basis and appends the orthonormal complement
directions needed to express the parent's (restricted) basis, so parent
directions are always representable; the transfer matrices are corrected
by the inverse Gram root of their vertical stack, which makes the
recomposed basis orthonormal to machine precision, and couplings absorb
the matching forward correction.

Byte accounting distinguishes dense payloads, low-rank factors, coupling
matrices, explicit bases, transfer matrices, and structure overhead (tree
records, permutations, retained singular values).  Compressed payloads
report exact stored length including codec headers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .clustering import BLOCK_LOWRANK, BlockTree, Cluster
from .fpcodec import (
    CompressedArray,
    ValrBlock,
    ValrFactor,
    compress_array,
    valr_compress,
    valr_compress_basis,
)
from .geometry import Geometry
from .kernel import DenseBlock, LowRankBlock, assemble_dense, lowrank_approx

# documented structure-overhead constants (bytes per record)
CLUSTER_RECORD_BYTES = 80  # start/stop/level/index + 6 bbox coordinates
BLOCK_RECORD_BYTES = 32  # row/col references, kind, leaf id

# complement directions weaker than this fraction of the accuracy target are
# dropped when enlarging child bases for the nested format
# sigma-weighted cut, relative to eps * sigma_max, for directions kept when
# nesting bases; 1.0 measured: worst leaf reconstruction ~2.6 eps (budget 5),
# about half the nested-format memory of smaller cuts
NESTED_DROP_FACTOR = 1.0


# ----------------------------------------------------------------------------
# payload and basis types


@dataclass(frozen=True)
class Coupling:
    """Small interaction matrix between a row and a column cluster basis."""

    values: np.ndarray  # (row rank, col rank)

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def nbytes_payload(self) -> int:
        return 8 * self.values.size


@dataclass(frozen=True)
class CompressedDense:
    data: CompressedArray

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def nbytes_payload(self) -> int:
        return self.data.stored_bytes


@dataclass(frozen=True)
class CompressedLowRank:
    """Factor pair compressed whole (uniform precision), sigma kept exact."""

    w: CompressedArray
    x: CompressedArray
    sigma: np.ndarray

    @property
    def rank(self) -> int:
        return self.sigma.size

    @property
    def shape(self) -> tuple:
        return (self.w.shape[0], self.x.shape[0])

    @property
    def nbytes_payload(self) -> int:
        return self.w.stored_bytes + self.x.stored_bytes


@dataclass(frozen=True)
class CompressedCoupling:
    data: CompressedArray

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def nbytes_payload(self) -> int:
        return self.data.stored_bytes


@dataclass(frozen=True)
class ClusterBasis:
    """Per-cluster basis: explicit matrix, or per-child transfers, or both.

    ``matrix`` is the |cluster| x rank orthonormal basis (always present in
    the shared-basis format; only at leaf clusters in the nested format).
    ``transfers`` holds one (child rank x rank) matrix per child at inner
    clusters of the nested format.  ``sigma`` keeps the retained singular
    values that weight each basis column (used by rate-adaptive
    compression).
    """

    cluster: Cluster
    matrix: object  # ndarray | CompressedArray | ValrFactor | None
    sigma: np.ndarray
    transfers: tuple = None  # per-child ndarray | CompressedArray

    @property
    def rank(self) -> int:
        return self.sigma.size


def _decode_array(a) -> np.ndarray:
    if isinstance(a, np.ndarray):
        return a
    return a.decode()


def basis_matrix(basis: ClusterBasis) -> np.ndarray:
    """Explicit basis as a plain array (decoding if compressed)."""
    if basis.matrix is None:
        raise ValueError("basis has no explicit matrix (inner nested node)")
    return _decode_array(basis.matrix)


# ----------------------------------------------------------------------------
# containers


@dataclass(frozen=True)
class HMatrix:
    tree: BlockTree
    eps: float
    payloads: list  # leaf_id -> DenseBlock | LowRankBlock | compressed variant

    format_tag = "h"

    @property
    def shape(self) -> tuple:
        return (self.tree.row_tree.n, self.tree.col_tree.n)


@dataclass(frozen=True)
class UniformHMatrix:
    tree: BlockTree
    eps: float
    payloads: list  # leaf_id -> DenseBlock | Coupling | compressed variant
    row_bases: dict  # cluster index -> ClusterBasis
    col_bases: dict

    format_tag = "uh"

    @property
    def shape(self) -> tuple:
        return (self.tree.row_tree.n, self.tree.col_tree.n)


@dataclass(frozen=True)
class H2Matrix:
    tree: BlockTree
    eps: float
    payloads: list
    row_bases: dict
    col_bases: dict

    format_tag = "h2"

    @property
    def shape(self) -> tuple:
        return (self.tree.row_tree.n, self.tree.col_tree.n)


# ----------------------------------------------------------------------------
# flat format


def build_hmatrix(geom: Geometry, tree: BlockTree, eps: float) -> HMatrix:
    """Assemble dense leaves and low-rank-approximate admissible leaves."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    payloads = [None] * len(tree.leaves)
    for leaf in tree.leaves:
        if leaf.kind == BLOCK_LOWRANK:
            payloads[leaf.leaf_id] = lowrank_approx(geom, leaf.row, leaf.col, eps)
        else:
            payloads[leaf.leaf_id] = DenseBlock(assemble_dense(geom, leaf.row, leaf.col))
    return HMatrix(tree, eps, payloads)


# ----------------------------------------------------------------------------
# shared-basis format


def _svd_truncate_abs(stack: np.ndarray, tol: float):
    """Left singular vectors with Frobenius tail at most tol (absolute)."""
    if stack.shape[1] == 0:
        return np.zeros((stack.shape[0], 0)), np.zeros(0)
    u, s, _ = np.linalg.svd(stack, full_matrices=False)
    tail = np.sqrt(np.concatenate([np.cumsum(s[::-1] ** 2)[::-1], [0.0]]))
    rank = int(np.searchsorted(-tail, -tol))  # first index with tail <= tol
    return u[:, :rank].copy(), s[:rank].copy()


def _stack_factors(blocks, side: str, eps: float, cluster: Cluster):
    """Shared basis for one cluster from the sigma-scaled factor stack."""
    pieces = []
    for blk in blocks:
        weight = np.linalg.norm(blk.sigma)
        if weight == 0.0:
            continue  # exact zero block constrains nothing
        factor = blk.w if side == "row" else blk.x
        pieces.append(factor * (blk.sigma / weight))
    if not pieces:
        return np.zeros((cluster.size, 0)), np.zeros(0)
    return _svd_truncate_abs(np.hstack(pieces), eps)


def build_uniform(h: HMatrix, eps: float) -> UniformHMatrix:
    """Shared-basis format from a flat one.

    Each cluster basis is the eps-truncated SVD of the stacked low-rank
    factors in its block row/column, every block scaled by its singular
    values and normalized to unit weight, so each block's projection error
    is at most eps times its own Frobenius norm.  Admissible payloads
    become couplings basis.T (w sigma x.T) basis.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    tree = h.tree

    def make_bases(cluster_tree, lists, side):
        bases = {}
        for cluster in cluster_tree.clusters:
            blocks = [
                h.payloads[b.leaf_id]
                for b in lists.get(cluster.index, [])
                if b.kind == BLOCK_LOWRANK
            ]
            matrix, sigma = _stack_factors(blocks, side, eps, cluster)
            bases[cluster.index] = ClusterBasis(cluster, matrix, sigma)
        return bases

    row_bases = make_bases(tree.row_tree, tree.row_lists, "row")
    col_bases = make_bases(tree.col_tree, tree.col_lists, "col")

    payloads = [None] * len(tree.leaves)
    for leaf in tree.leaves:
        blk = h.payloads[leaf.leaf_id]
        if leaf.kind != BLOCK_LOWRANK:
            payloads[leaf.leaf_id] = blk
            continue
        u_t = row_bases[leaf.row.index].matrix
        v_s = col_bases[leaf.col.index].matrix
        coeff = (u_t.T @ blk.w) * blk.sigma  # (r_t, k)
        payloads[leaf.leaf_id] = Coupling(coeff @ (v_s.T @ blk.x).T)
    return UniformHMatrix(tree, eps, payloads, row_bases, col_bases)


# ----------------------------------------------------------------------------
# nested-basis format


def _enlarge_child(basis: ClusterBasis, restriction: np.ndarray,
                   parent_sigma: np.ndarray, drop_tol: float):
    """Child target basis: own shared basis plus complement of the parent.

    The parent restriction is weighted by the parent's column importances
    before complementing, so dropped directions cost at most drop_tol in
    the sigma-weighted norm.  Low-weight parent directions fall below the
    cut and add nothing; the realized parent basis sheds them later via
    the transfer Gram spectrum.
    """
    own = basis.matrix
    weighted = restriction * parent_sigma
    residual = weighted - own @ (own.T @ weighted)
    q, s_q = _svd_truncate_abs(residual, drop_tol)
    if q.shape[1] == 0:
        return own, basis.sigma
    q -= own @ (own.T @ q)  # second pass keeps the union orthonormal
    q, _ = np.linalg.qr(q)
    return np.hstack([own, q]), np.concatenate([basis.sigma, s_q])


def build_h2(u: UniformHMatrix, eps: float) -> H2Matrix:
    """Nested-basis format from a shared-basis one.

    Two sweeps per side.  Top-down, every cluster gets a target basis: its
    shared basis enlarged by the sigma-weighted complement of the parent's
    restriction, so parent directions stay representable even for
    rank-deficient children.  Bottom-up, targets are realized inside the
    span of the already realized children: the sigma-scaled coefficients
    of the target in the child bases are truncated by SVD, whose left
    vectors are both the transfer matrices and an exactly orthonormal
    combination of child columns.  Couplings are re-expressed in the
    realized coordinates, so directions the children cannot carry are
    dropped rather than padded, keeping ranks near the shared ones.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    tree = u.tree
    payloads = [
        Coupling(p.values.copy()) if isinstance(p, Coupling) else p for p in u.payloads
    ]

    def nest_side(cluster_tree, shared, lists, side):
        drop_tol_for = lambda sig: NESTED_DROP_FACTOR * eps * (
            float(sig.max()) if sig.size else 0.0
        )
        order = cluster_tree.clusters  # preorder: every parent before its children
        root = cluster_tree.root
        targets = {root.index: (shared[root.index].matrix, shared[root.index].sigma)}
        for parent in order:
            if parent.is_leaf:
                continue
            p_matrix, p_sigma = targets[parent.index]
            drop_tol = drop_tol_for(p_sigma)
            for child in parent.children:
                rows = slice(child.start - parent.start, child.stop - parent.start)
                targets[child.index] = _enlarge_child(
                    shared[child.index], p_matrix[rows, :], p_sigma, drop_tol
                )

        bases = {}
        realized = {}  # cluster index -> explicit realized basis, freed when consumed
        for parent in reversed(order):
            p_matrix, p_sigma = targets.pop(parent.index)
            if parent.is_leaf:
                bases[parent.index] = ClusterBasis(parent, p_matrix, p_sigma)
                realized[parent.index] = p_matrix
                continue
            rank = p_sigma.size
            parts = []
            for child in parent.children:
                rows = slice(child.start - parent.start, child.stop - parent.start)
                parts.append(realized[child.index].T @ p_matrix[rows, :])
            z = np.vstack(parts)  # target coords in the child bases
            q, s_kept = _svd_truncate_abs(z * p_sigma, drop_tol_for(p_sigma))
            coeff = q.T @ z  # realized.T @ target, exact by child orthonormality
            transfers = []
            offset = 0
            for part in parts:
                k_c = part.shape[0]
                transfers.append(np.ascontiguousarray(q[offset:offset + k_c, :]))
                offset += k_c
            bases[parent.index] = ClusterBasis(parent, None, s_kept, tuple(transfers))
            realized[parent.index] = np.vstack([
                realized.pop(child.index) @ t
                for child, t in zip(parent.children, transfers)
            ])
            # blocks at this cluster were expressed in the (padded) target
            # basis; project them onto the realized one
            for b in lists.get(parent.index, []):
                if b.kind != BLOCK_LOWRANK:
                    continue
                s = payloads[b.leaf_id].values
                if side == "row":
                    padded = np.vstack([s, np.zeros((rank - s.shape[0], s.shape[1]))])
                    payloads[b.leaf_id] = Coupling(coeff @ padded)
                else:
                    padded = np.hstack([s, np.zeros((s.shape[0], rank - s.shape[1]))])
                    payloads[b.leaf_id] = Coupling(padded @ coeff.T)
        return bases

    row_bases = nest_side(tree.row_tree, u.row_bases, tree.row_lists, "row")
    col_bases = nest_side(tree.col_tree, u.col_bases, tree.col_lists, "col")

    # enlargement may have grown leaf ranks; pad couplings at leaf clusters
    for leaf in tree.leaves:
        if leaf.kind != BLOCK_LOWRANK:
            continue
        s = payloads[leaf.leaf_id].values
        r_t = row_bases[leaf.row.index].rank
        r_s = col_bases[leaf.col.index].rank
        if s.shape != (r_t, r_s):
            padded = np.zeros((r_t, r_s))
            padded[: s.shape[0], : s.shape[1]] = s
            payloads[leaf.leaf_id] = Coupling(padded)
    return H2Matrix(tree, u.eps, payloads, row_bases, col_bases)


def materialize_basis(mat: H2Matrix, bases: dict, cluster: Cluster) -> np.ndarray:
    """Recompose a nested cluster basis from leaf bases and transfers."""
    basis = bases[cluster.index]
    if basis.matrix is not None:
        return basis_matrix(basis)
    parts = [
        materialize_basis(mat, bases, child) @ _decode_array(basis.transfers[i])
        for i, child in enumerate(cluster.children)
    ]
    return np.vstack(parts)


# ----------------------------------------------------------------------------
# dense reconstruction (verification oracle; permuted index order)


def _payload_dense(payload) -> np.ndarray:
    if isinstance(payload, DenseBlock):
        return payload.values
    if isinstance(payload, CompressedDense):
        return payload.data.decode()
    if isinstance(payload, LowRankBlock):
        return payload.evaluate()
    if isinstance(payload, CompressedLowRank):
        return (payload.w.decode() * payload.sigma) @ payload.x.decode().T
    if isinstance(payload, ValrBlock):
        return (payload.w.decode() * payload.sigma) @ payload.x.decode().T
    raise TypeError(f"unexpected payload {type(payload)!r}")


def _coupling_dense(payload) -> np.ndarray:
    if isinstance(payload, Coupling):
        return payload.values
    if isinstance(payload, CompressedCoupling):
        return payload.data.decode()
    raise TypeError(f"unexpected coupling payload {type(payload)!r}")


def to_dense(mat) -> np.ndarray:
    """Full matrix in cluster-permuted ordering (small problems only)."""
    nrows, ncols = mat.shape
    out = np.zeros((nrows, ncols))
    if isinstance(mat, HMatrix):
        for leaf in mat.tree.leaves:
            out[leaf.row.start : leaf.row.stop, leaf.col.start : leaf.col.stop] = (
                _payload_dense(mat.payloads[leaf.leaf_id])
            )
        return out
    if isinstance(mat, UniformHMatrix):
        row_explicit = {i: basis_matrix(b) for i, b in mat.row_bases.items() if b.rank}
        col_explicit = {i: basis_matrix(b) for i, b in mat.col_bases.items() if b.rank}
    elif isinstance(mat, H2Matrix):
        row_explicit = {
            c.index: materialize_basis(mat, mat.row_bases, c)
            for c in mat.tree.row_tree.clusters
            if mat.row_bases[c.index].rank
        }
        col_explicit = {
            c.index: materialize_basis(mat, mat.col_bases, c)
            for c in mat.tree.col_tree.clusters
            if mat.col_bases[c.index].rank
        }
    else:
        raise TypeError(f"not a matrix container: {type(mat)!r}")
    for leaf in mat.tree.leaves:
        rows = slice(leaf.row.start, leaf.row.stop)
        cols = slice(leaf.col.start, leaf.col.stop)
        payload = mat.payloads[leaf.leaf_id]
        if leaf.kind == BLOCK_LOWRANK:
            s = _coupling_dense(payload)
            if s.size == 0 or leaf.row.index not in row_explicit:
                continue
            u_t = row_explicit[leaf.row.index]
            v_s = col_explicit[leaf.col.index]
            out[rows, cols] = u_t @ s @ v_s.T
        else:
            out[rows, cols] = _payload_dense(payload)
    return out


# ----------------------------------------------------------------------------
# memory accounting


@dataclass(frozen=True)
class MemoryBreakdown:
    dense: int = 0
    lowrank: int = 0
    coupling: int = 0
    basis: int = 0
    transfer: int = 0
    structure: int = 0

    @property
    def total(self) -> int:
        return (
            self.dense + self.lowrank + self.coupling
            + self.basis + self.transfer + self.structure
        )

    @property
    def payload_total(self) -> int:
        return self.dense + self.lowrank + self.coupling + self.basis + self.transfer


def _array_bytes(a) -> int:
    if isinstance(a, np.ndarray):
        return 8 * a.size
    if isinstance(a, (CompressedArray, ValrFactor)):
        return a.stored_bytes
    raise TypeError(f"unexpected array payload {type(a)!r}")


def memory_footprint(mat) -> MemoryBreakdown:
    """Exact byte breakdown of one container.

    Uncompressed payload values cost 8 bytes each; compressed payloads
    report their stored byte length including codec headers.  Structure
    covers tree records, the permutation, and retained singular values.
    """
    dense = lowrank = coupling = basis = transfer = 0
    structure = 0

    trees = {id(mat.tree.row_tree): mat.tree.row_tree, id(mat.tree.col_tree): mat.tree.col_tree}
    for t in trees.values():
        structure += CLUSTER_RECORD_BYTES * len(t.clusters) + 8 * t.n
    structure += BLOCK_RECORD_BYTES * mat.tree.n_nodes

    for payload in mat.payloads:
        if isinstance(payload, DenseBlock):
            dense += payload.nbytes_payload
        elif isinstance(payload, CompressedDense):
            dense += payload.nbytes_payload
        elif isinstance(payload, LowRankBlock):
            lowrank += payload.nbytes_payload
            structure += 8 * payload.sigma.size
        elif isinstance(payload, (CompressedLowRank, ValrBlock)):
            lowrank += payload.nbytes_payload if isinstance(payload, CompressedLowRank) \
                else payload.stored_bytes
            structure += 8 * payload.sigma.size
        elif isinstance(payload, (Coupling, CompressedCoupling)):
            coupling += payload.nbytes_payload
        else:
            raise TypeError(f"unexpected payload {type(payload)!r}")

    for bases in (getattr(mat, "row_bases", None), getattr(mat, "col_bases", None)):
        if bases is None:
            continue
        for cb in bases.values():
            structure += 8 * cb.sigma.size
            if cb.matrix is not None:
                basis += _array_bytes(cb.matrix)
            if cb.transfers is not None:
                for t in cb.transfers:
                    transfer += _array_bytes(t)

    return MemoryBreakdown(dense, lowrank, coupling, basis, transfer, structure)


# ----------------------------------------------------------------------------
# compression integration


def _lowrank_delta(eps: float, sigma: np.ndarray) -> float:
    weight = float(np.linalg.norm(sigma))
    return eps * weight if weight > 0.0 else eps * np.finfo(np.float64).tiny


def compress_matrix(mat, scheme: str, valr: bool = False):
    """Compressed copy of a container.

    Dense blocks, couplings, and transfer matrices are compressed directly
    at the matrix accuracy; low-rank factors and explicit bases switch to
    per-column rate adaptation when ``valr`` is set (nested-format inner
    transfers always stay direct).  ``scheme`` is "aflp" or "fpx".
    """
    eps = mat.eps

    def pack_lowrank(blk: LowRankBlock):
        if valr:
            return valr_compress(blk.w, blk.x, blk.sigma, _lowrank_delta(eps, blk.sigma), scheme)
        return CompressedLowRank(
            compress_array(blk.w, scheme, eps),
            compress_array(blk.x, scheme, eps),
            blk.sigma.copy(),
        )

    def pack_payload(payload):
        if isinstance(payload, DenseBlock):
            return CompressedDense(compress_array(payload.values, scheme, eps))
        if isinstance(payload, LowRankBlock):
            return pack_lowrank(payload)
        if isinstance(payload, Coupling):
            return CompressedCoupling(compress_array(payload.values, scheme, eps))
        raise TypeError(f"container already compressed? {type(payload)!r}")

    def pack_basis(cb: ClusterBasis, allow_valr: bool):
        matrix = cb.matrix
        if matrix is not None and cb.rank:
            if valr and allow_valr and cb.sigma.size:
                delta = _lowrank_delta(eps, cb.sigma) / max(cb.rank, 1)
                matrix = valr_compress_basis(matrix, cb.sigma, delta, scheme)
            else:
                matrix = compress_array(matrix, scheme, eps)
        transfers = cb.transfers
        if transfers is not None:
            transfers = tuple(
                compress_array(t, scheme, eps) if t.size else t for t in transfers
            )
        return replace(cb, matrix=matrix, transfers=transfers)

    payloads = [pack_payload(p) for p in mat.payloads]
    if isinstance(mat, HMatrix):
        return HMatrix(mat.tree, eps, payloads)
    if isinstance(mat, UniformHMatrix):
        row = {i: pack_basis(b, True) for i, b in mat.row_bases.items()}
        col = {i: pack_basis(b, True) for i, b in mat.col_bases.items()}
        return UniformHMatrix(mat.tree, eps, payloads, row, col)
    if isinstance(mat, H2Matrix):
        # rate-adaptive compression applies to leaf bases only
        row = {i: pack_basis(b, b.matrix is not None) for i, b in mat.row_bases.items()}
        col = {i: pack_basis(b, b.matrix is not None) for i, b in mat.col_bases.items()}
        return H2Matrix(mat.tree, eps, payloads, row, col)
    raise TypeError(f"not a matrix container: {type(mat)!r}")
