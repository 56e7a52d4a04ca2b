"""Matrix-vector products y := alpha*M*x + y for the hierarchical formats.

Every algorithm works on vectors in cluster-tree permuted order (see
:class:`SegmentedVector` for converting from natural order).  Compressed
payloads are accepted transparently: dense buffers are decoded in column
strips, factor and basis columns on demand; nothing is materialized.

Parallel variants take a ``workers`` argument (None or 1 = sequential).
The level-synchronous algorithms (cluster lists, shared-basis, nested)
produce bitwise-identical results for every worker count: the block row
of a cluster is always processed by exactly one task in a fixed order,
and a level barrier separates parents from children, so each output
element sees the same update sequence regardless of scheduling.  The
mutex and thread-local variants trade that for simpler scheduling and
match within accumulation-order tolerance.
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .clustering import BLOCK_DENSE, BLOCK_LOWRANK, ClusterTree
from .fpcodec import CompressedArray, ValrBlock
from .formats import (
    CompressedCoupling,
    CompressedDense,
    CompressedLowRank,
    Coupling,
)
from .kernel import DenseBlock, LowRankBlock

DECODE_STRIP = 64  # column entries decoded per chunk in compressed loops

# when set, level-parallel algorithms assert that concurrently written
# output slices are disjoint before launching each level
DEBUG_CHECK_DISJOINT = False


def _resolve_workers(workers) -> int:
    if workers is None:
        return 1
    if workers == "max":
        return os.cpu_count() or 1
    workers = int(workers)
    if workers < 1:
        raise ValueError("workers must be at least 1")
    return workers


def _check_dims(mat, x, y):
    m, n = mat.shape
    if np.shape(x) != (n,):
        raise ValueError(f"x has shape {np.shape(x)}, expected ({n},)")
    if not isinstance(y, np.ndarray) or y.shape != (m,):
        raise ValueError(f"y must be a length-{m} float64 array")
    if y.dtype != np.float64:
        raise ValueError("y must be float64 (updated in place)")


@dataclass
class SegmentedVector:
    """Vector in cluster-tree permuted order with per-cluster slicing."""

    values: np.ndarray
    perm: np.ndarray

    @classmethod
    def from_natural(cls, tree: ClusterTree, v) -> "SegmentedVector":
        v = np.asarray(v, dtype=np.float64)
        return cls(v[tree.perm], tree.perm)

    def segment(self, cluster) -> np.ndarray:
        return self.values[cluster.start : cluster.stop]

    def to_natural(self) -> np.ndarray:
        out = np.empty_like(self.values)
        out[self.perm] = self.values
        return out


@dataclass
class CoeffStore:
    """Per-cluster coefficient vectors, keyed by cluster index.

    Only clusters with basis rank > 0 hold an entry.
    """

    coeffs: dict

    def get(self, index, default=None):
        return self.coeffs.get(index, default)

    def __getitem__(self, index):
        return self.coeffs[index]

    def __contains__(self, index):
        return index in self.coeffs

    def __len__(self):
        return len(self.coeffs)


# ----------------------------------------------------------------------------
# payload primitives


def zmvm_dense(data: CompressedArray, x, y, alpha):
    """y += alpha * D @ x for a compressed column-major dense block.

    Columns are decoded in strips of :data:`DECODE_STRIP` entries; the
    arithmetic is elementwise y_i += (alpha*x_j) * D_ij, so strip length
    does not change the result bit for bit.
    """
    m, n = data.shape
    for j in range(n):
        ax = alpha * x[j]
        for lo in range(0, m, DECODE_STRIP):
            hi = min(lo + DECODE_STRIP, m)
            y[lo:hi] += ax * data.decode_column_strip(j, lo, hi)
    return y


def zmvm_dense_scalar(data: CompressedArray, x, y, alpha):
    """Reference entry-at-a-time path; bitwise identical to zmvm_dense."""
    m, n = data.shape
    for j in range(n):
        ax = alpha * x[j]
        for i in range(m):
            y[i] += ax * data.decode_column_strip(j, i, i + 1)[0]
    return y


def _zmvm_dense_adjoint(data: CompressedArray, x, y, alpha):
    """y += alpha * D.T @ x, decoding column strips."""
    m, n = data.shape
    for j in range(n):
        acc = 0.0
        for lo in range(0, m, DECODE_STRIP):
            hi = min(lo + DECODE_STRIP, m)
            acc += float(data.decode_column_strip(j, lo, hi) @ x[lo:hi])
        y[j] += alpha * acc
    return y


def _apply_dense(payload, x_s, y_t, alpha):
    if isinstance(payload, DenseBlock):
        y_t += alpha * (payload.values @ x_s)
    elif isinstance(payload, CompressedDense):
        zmvm_dense(payload.data, x_s, y_t, alpha)
    else:
        raise TypeError(f"not a dense payload: {type(payload).__name__}")


def _apply_dense_adjoint(payload, x_t, y_s, alpha):
    if isinstance(payload, DenseBlock):
        y_s += alpha * (payload.values.T @ x_t)
    elif isinstance(payload, CompressedDense):
        _zmvm_dense_adjoint(payload.data, x_t, y_s, alpha)
    else:
        raise TypeError(f"not a dense payload: {type(payload).__name__}")


def _apply_lowrank(payload, x_s, y_t, alpha):
    if isinstance(payload, LowRankBlock):
        t = payload.x.T @ x_s
        t *= payload.sigma
        y_t += payload.w @ (alpha * t)
        return
    if not isinstance(payload, (CompressedLowRank, ValrBlock)):
        raise TypeError(f"not a low-rank payload: {type(payload).__name__}")
    rank = payload.rank
    if rank == 0:
        return
    t = np.empty(rank)
    for j in range(rank):
        t[j] = payload.x.decode_column(j) @ x_s
    t *= payload.sigma
    t *= alpha
    for j in range(rank):
        y_t += t[j] * payload.w.decode_column(j)


def _apply_lowrank_adjoint(payload, x_t, y_s, alpha):
    if isinstance(payload, LowRankBlock):
        t = payload.w.T @ x_t
        t *= payload.sigma
        y_s += payload.x @ (alpha * t)
        return
    if not isinstance(payload, (CompressedLowRank, ValrBlock)):
        raise TypeError(f"not a low-rank payload: {type(payload).__name__}")
    rank = payload.rank
    if rank == 0:
        return
    t = np.empty(rank)
    for j in range(rank):
        t[j] = payload.w.decode_column(j) @ x_t
    t *= payload.sigma
    t *= alpha
    for j in range(rank):
        y_s += t[j] * payload.x.decode_column(j)


def _apply_leaf(payload, kind, x_s, y_t, alpha):
    if kind == BLOCK_DENSE:
        _apply_dense(payload, x_s, y_t, alpha)
    else:
        _apply_lowrank(payload, x_s, y_t, alpha)


def _coupling_matrix(payload) -> np.ndarray:
    if isinstance(payload, Coupling):
        return payload.values
    if isinstance(payload, CompressedCoupling):
        return payload.data.decode()
    raise TypeError(f"not a coupling payload: {type(payload).__name__}")


def _basis_forward(matrix, x_s) -> np.ndarray:
    """coefficients := basis.T @ x_s, decoding per column if compressed."""
    if isinstance(matrix, np.ndarray):
        return matrix.T @ x_s
    rank = matrix.shape[1]
    out = np.empty(rank)
    for j in range(rank):
        out[j] = matrix.decode_column(j) @ x_s
    return out


def _basis_backward(matrix, coeff, y_t):
    """y_t += basis @ coeff, decoding per column if compressed."""
    if isinstance(matrix, np.ndarray):
        y_t += matrix @ coeff
        return
    for j in range(coeff.size):
        y_t += coeff[j] * matrix.decode_column(j)


def _transfer_matrix(transfer) -> np.ndarray:
    if isinstance(transfer, np.ndarray):
        return transfer
    return transfer.decode()


# ----------------------------------------------------------------------------
# level-synchronous scheduling


def _assert_level_disjoint(level):
    spans = sorted((c.start, c.stop) for c in level)
    for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise AssertionError(f"overlapping output slices [{s0},{e0}) and [{s1},{e1})")


def _run_levels(levels, fn, nworkers):
    """Run fn over each level's clusters; a level completes before the next."""
    if nworkers <= 1:
        for level in levels:
            for cluster in level:
                fn(cluster)
        return
    with ThreadPoolExecutor(max_workers=nworkers) as ex:
        for level in levels:
            if DEBUG_CHECK_DISJOINT:
                _assert_level_disjoint(level)
            list(ex.map(fn, level))


def _leaf_chunks(leaves, nworkers):
    chunk_ids = np.array_split(np.arange(len(leaves)), nworkers)
    return [[leaves[i] for i in ids] for ids in chunk_ids if len(ids)]


# ----------------------------------------------------------------------------
# flat H-matrix products


def hmvm_seq(alpha, mat, x, y):
    """y += alpha * M @ x, iterating the leaf blocks sequentially."""
    _check_dims(mat, x, y)
    alpha = float(alpha)
    if alpha == 0.0:
        return y
    x = np.asarray(x, dtype=np.float64)
    for leaf in mat.tree.leaves:
        x_s = x[leaf.col.start : leaf.col.stop]
        y_t = y[leaf.row.start : leaf.row.stop]
        _apply_leaf(mat.payloads[leaf.leaf_id], leaf.kind, x_s, y_t, alpha)
    return y


def hmvm_chunks(alpha, mat, x, y, workers=None):
    """Parallel over leaf chunks; y updates guarded by per-cluster locks."""
    _check_dims(mat, x, y)
    alpha = float(alpha)
    if alpha == 0.0:
        return y
    x = np.asarray(x, dtype=np.float64)
    nworkers = _resolve_workers(workers)
    leaves = mat.tree.leaves
    locks = {leaf.row.index: threading.Lock() for leaf in leaves}

    def run(chunk):
        for leaf in chunk:
            x_s = x[leaf.col.start : leaf.col.stop]
            local = np.zeros(leaf.row.size)
            _apply_leaf(mat.payloads[leaf.leaf_id], leaf.kind, x_s, local, alpha)
            with locks[leaf.row.index]:
                y[leaf.row.start : leaf.row.stop] += local

    chunks = _leaf_chunks(leaves, nworkers)
    if nworkers <= 1:
        for chunk in chunks:
            run(chunk)
    else:
        with ThreadPoolExecutor(max_workers=nworkers) as ex:
            list(ex.map(run, chunks))
    return y


def hmvm_cluster_lists(alpha, mat, x, y, workers=None):
    """Block rows processed per cluster, levels in order, rows in parallel.

    Within one block row the blocks are visited in ascending column-range
    order and written by a single task; a level barrier keeps every parent
    row ahead of its descendants.  Output is therefore bitwise identical
    for any worker count.
    """
    _check_dims(mat, x, y)
    alpha = float(alpha)
    if alpha == 0.0:
        return y
    x = np.asarray(x, dtype=np.float64)
    tree = mat.tree

    def run_row(cluster):
        blocks = tree.row_lists.get(cluster.index)
        if not blocks:
            return
        y_t = y[cluster.start : cluster.stop]
        for leaf in blocks:
            x_s = x[leaf.col.start : leaf.col.stop]
            _apply_leaf(mat.payloads[leaf.leaf_id], leaf.kind, x_s, y_t, alpha)

    _run_levels(tree.row_tree.levels, run_row, _resolve_workers(workers))
    return y


def hmvm_thread_local(alpha, mat, x, y, workers=None):
    """Each worker accumulates into a private output, reduced at the end."""
    _check_dims(mat, x, y)
    alpha = float(alpha)
    if alpha == 0.0:
        return y
    x = np.asarray(x, dtype=np.float64)
    nworkers = _resolve_workers(workers)
    chunks = _leaf_chunks(mat.tree.leaves, nworkers)

    def run(chunk):
        local = np.zeros(mat.shape[0])
        for leaf in chunk:
            x_s = x[leaf.col.start : leaf.col.stop]
            y_t = local[leaf.row.start : leaf.row.stop]
            _apply_leaf(mat.payloads[leaf.leaf_id], leaf.kind, x_s, y_t, alpha)
        return local

    if nworkers <= 1:
        parts = [run(chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=nworkers) as ex:
            parts = list(ex.map(run, chunks))
    for part in parts:  # fixed chunk order
        y += part
    return y


def hmvm_adjoint(alpha, mat, x, y):
    """y += alpha * M.T @ x via the block-column lists."""
    m, n = mat.shape
    if np.shape(x) != (m,):
        raise ValueError(f"x has shape {np.shape(x)}, expected ({m},)")
    if not isinstance(y, np.ndarray) or y.shape != (n,) or y.dtype != np.float64:
        raise ValueError(f"y must be a length-{n} float64 array")
    alpha = float(alpha)
    if alpha == 0.0:
        return y
    x = np.asarray(x, dtype=np.float64)
    tree = mat.tree
    for cluster in tree.col_tree.clusters:
        blocks = tree.col_lists.get(cluster.index)
        if not blocks:
            continue
        y_s = y[cluster.start : cluster.stop]
        for leaf in blocks:
            x_t = x[leaf.row.start : leaf.row.stop]
            payload = mat.payloads[leaf.leaf_id]
            if leaf.kind == BLOCK_DENSE:
                _apply_dense_adjoint(payload, x_t, y_s, alpha)
            else:
                _apply_lowrank_adjoint(payload, x_t, y_s, alpha)
    return y


# ----------------------------------------------------------------------------
# shared-basis products


def uni_forward(col_bases, x, workers=None) -> CoeffStore:
    """Project x onto every column basis: one coefficient vector per cluster.

    Clusters are independent; rank-0 clusters get no entry.
    """
    x = np.asarray(x, dtype=np.float64)
    items = sorted(col_bases.items())
    nworkers = _resolve_workers(workers)

    def project(item):
        index, cb = item
        if cb.rank == 0:
            return index, None
        c = cb.cluster
        return index, _basis_forward(cb.matrix, x[c.start : c.stop])

    if nworkers <= 1:
        results = [project(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=nworkers) as ex:
            results = list(ex.map(project, items))
    return CoeffStore({idx: vec for idx, vec in results if vec is not None})


def uni_mvm(alpha, mat, x, y, workers=None):
    """Shared-basis product: couplings accumulate per block row, then the
    row basis expands the sum; level-synchronous and bitwise deterministic."""
    _check_dims(mat, x, y)
    alpha = float(alpha)
    if alpha == 0.0:
        return y
    x = np.asarray(x, dtype=np.float64)
    nworkers = _resolve_workers(workers)
    store = uni_forward(mat.col_bases, x, workers=workers)
    tree = mat.tree

    def run_row(cluster):
        blocks = tree.row_lists.get(cluster.index)
        if not blocks:
            return
        y_t = y[cluster.start : cluster.stop]
        cb = mat.row_bases[cluster.index]
        coeff = np.zeros(cb.rank)
        touched = False
        for leaf in blocks:
            if leaf.kind != BLOCK_LOWRANK or coeff.size == 0:
                continue
            s_col = store.get(leaf.col.index)
            if s_col is None:
                continue
            coeff += _coupling_matrix(mat.payloads[leaf.leaf_id]) @ s_col
            touched = True
        if touched:
            _basis_backward(cb.matrix, alpha * coeff, y_t)
        for leaf in blocks:
            if leaf.kind == BLOCK_DENSE:
                x_s = x[leaf.col.start : leaf.col.stop]
                _apply_dense(mat.payloads[leaf.leaf_id], x_s, y_t, alpha)

    _run_levels(tree.row_tree.levels, run_row, nworkers)
    return y


def uni_mvm_mutex(alpha, mat, x, y, workers=None):
    """Parallel over low-rank blocks with lock-guarded accumulators."""
    _check_dims(mat, x, y)
    alpha = float(alpha)
    if alpha == 0.0:
        return y
    x = np.asarray(x, dtype=np.float64)
    nworkers = _resolve_workers(workers)
    store = uni_forward(mat.col_bases, x, workers=workers)
    tree = mat.tree
    lowrank = [b for b in tree.leaves if b.kind == BLOCK_LOWRANK]
    acc = {}
    locks = {}
    for leaf in lowrank:
        idx = leaf.row.index
        if idx not in acc:
            acc[idx] = np.zeros(mat.row_bases[idx].rank)
            locks[idx] = threading.Lock()

    def run(chunk):
        for leaf in chunk:
            s_col = store.get(leaf.col.index)
            if s_col is None or acc[leaf.row.index].size == 0:
                continue
            part = _coupling_matrix(mat.payloads[leaf.leaf_id]) @ s_col
            with locks[leaf.row.index]:
                acc[leaf.row.index] += part

    chunks = _leaf_chunks(lowrank, nworkers)
    if nworkers <= 1:
        for chunk in chunks:
            run(chunk)
    else:
        with ThreadPoolExecutor(max_workers=nworkers) as ex:
            list(ex.map(run, chunks))

    for cluster in tree.row_tree.clusters:
        coeff = acc.get(cluster.index)
        y_t = y[cluster.start : cluster.stop]
        if coeff is not None and coeff.size:
            _basis_backward(mat.row_bases[cluster.index].matrix, alpha * coeff, y_t)
        for leaf in tree.row_lists.get(cluster.index, ()):
            if leaf.kind == BLOCK_DENSE:
                x_s = x[leaf.col.start : leaf.col.stop]
                _apply_dense(mat.payloads[leaf.leaf_id], x_s, y_t, alpha)
    return y


# ----------------------------------------------------------------------------
# nested-basis products


def h2_forward(col_bases, x, workers=None) -> CoeffStore:
    """Leaves project directly; inner coefficients combine the children's
    through the transfer matrices, strictly leaves to root."""
    x = np.asarray(x, dtype=np.float64)
    nworkers = _resolve_workers(workers)
    by_level = {}
    for index, cb in col_bases.items():
        by_level.setdefault(cb.cluster.level, []).append(index)
    coeffs = {}

    def project(index):
        cb = col_bases[index]
        if cb.rank == 0:
            return
        c = cb.cluster
        if cb.matrix is not None:
            coeffs[index] = _basis_forward(cb.matrix, x[c.start : c.stop])
            return
        total = np.zeros(cb.rank)
        for child, transfer in zip(c.children, cb.transfers):
            part = coeffs.get(child.index)
            if part is not None:
                total += _transfer_matrix(transfer).T @ part
        coeffs[index] = total

    levels = sorted(by_level, reverse=True)
    if nworkers <= 1:
        for level in levels:
            for index in sorted(by_level[level]):
                project(index)
    else:
        with ThreadPoolExecutor(max_workers=nworkers) as ex:
            for level in levels:
                list(ex.map(project, sorted(by_level[level])))
    return CoeffStore(coeffs)


def _h2_sweep(alpha, mat, x, y, store, extra_acc, nworkers, with_couplings):
    """Top-down backward pass shared by the nested-format products."""
    tree = mat.tree
    seeds = {}

    def run_row(cluster):
        cb = mat.row_bases[cluster.index]
        coeff = seeds.pop(cluster.index, None)
        if coeff is None:
            coeff = np.zeros(cb.rank)
        extra = extra_acc.get(cluster.index)
        if extra is not None:
            coeff = coeff + extra
        blocks = tree.row_lists.get(cluster.index, ())
        if with_couplings and coeff.size:
            for leaf in blocks:
                if leaf.kind != BLOCK_LOWRANK:
                    continue
                s_col = store.get(leaf.col.index)
                if s_col is None:
                    continue
                coeff += _coupling_matrix(mat.payloads[leaf.leaf_id]) @ s_col
        y_t = y[cluster.start : cluster.stop]
        if cluster.is_leaf:
            if coeff.size:
                _basis_backward(cb.matrix, alpha * coeff, y_t)
        else:
            transfers = cb.transfers or ()
            for child, transfer in zip(cluster.children, transfers):
                child_rank = mat.row_bases[child.index].rank
                if child_rank == 0:
                    continue
                if coeff.size == 0:
                    seeds[child.index] = np.zeros(child_rank)
                else:
                    seeds[child.index] = _transfer_matrix(transfer) @ coeff
        for leaf in blocks:
            if leaf.kind == BLOCK_DENSE:
                x_s = x[leaf.col.start : leaf.col.stop]
                _apply_dense(mat.payloads[leaf.leaf_id], x_s, y_t, alpha)

    _run_levels(tree.row_tree.levels, run_row, nworkers)


def h2_mvm(alpha, mat, x, y, workers=None):
    """Nested-basis product: coefficients flow root-to-leaves through the
    transfer matrices; the output is written only at leaf clusters (basis
    part) plus wherever dense blocks sit.  Bitwise deterministic."""
    _check_dims(mat, x, y)
    alpha = float(alpha)
    if alpha == 0.0:
        return y
    x = np.asarray(x, dtype=np.float64)
    nworkers = _resolve_workers(workers)
    store = h2_forward(mat.col_bases, x, workers=workers)
    _h2_sweep(alpha, mat, x, y, store, {}, nworkers, with_couplings=True)
    return y


def h2_mvm_mutex(alpha, mat, x, y, workers=None):
    """Coupling accumulation parallel over blocks with per-cluster locks,
    then the deterministic top-down sweep."""
    _check_dims(mat, x, y)
    alpha = float(alpha)
    if alpha == 0.0:
        return y
    x = np.asarray(x, dtype=np.float64)
    nworkers = _resolve_workers(workers)
    store = h2_forward(mat.col_bases, x, workers=workers)
    tree = mat.tree
    lowrank = [b for b in tree.leaves if b.kind == BLOCK_LOWRANK]
    acc = {}
    locks = {}
    for leaf in lowrank:
        idx = leaf.row.index
        if idx not in acc:
            acc[idx] = np.zeros(mat.row_bases[idx].rank)
            locks[idx] = threading.Lock()

    def run(chunk):
        for leaf in chunk:
            s_col = store.get(leaf.col.index)
            if s_col is None or acc[leaf.row.index].size == 0:
                continue
            part = _coupling_matrix(mat.payloads[leaf.leaf_id]) @ s_col
            with locks[leaf.row.index]:
                acc[leaf.row.index] += part

    chunks = _leaf_chunks(lowrank, nworkers)
    if nworkers <= 1:
        for chunk in chunks:
            run(chunk)
    else:
        with ThreadPoolExecutor(max_workers=nworkers) as ex:
            list(ex.map(run, chunks))

    _h2_sweep(alpha, mat, x, y, store, acc, nworkers, with_couplings=False)
    return y


# ----------------------------------------------------------------------------
# variant registry and work accounting


def _seq_ignore_workers(alpha, mat, x, y, workers=None):
    return hmvm_seq(alpha, mat, x, y)


def _adjoint_ignore_workers(alpha, mat, x, y, workers=None):
    return hmvm_adjoint(alpha, mat, x, y)


def mvm_variants(format_tag: str) -> dict:
    """Name -> callable(alpha, M, x, y, workers) for a container format."""
    if format_tag in ("h", "hodlr", "blr"):
        return {
            "seq": _seq_ignore_workers,
            "chunks": hmvm_chunks,
            "lists": hmvm_cluster_lists,
            "local": hmvm_thread_local,
            "adjoint": _adjoint_ignore_workers,
        }
    if format_tag == "uh":
        return {"uni": uni_mvm, "uni-mutex": uni_mvm_mutex}
    if format_tag == "h2":
        return {"h2": h2_mvm, "h2-mutex": h2_mvm_mutex}
    raise ValueError(f"unknown format tag {format_tag!r}")


DETERMINISTIC_VARIANTS = ("lists", "uni", "h2")


@dataclass(frozen=True)
class WorkEstimate:
    """Software-counted arithmetic and memory traffic of one product."""

    flops: int
    bytes_touched: int

    @property
    def intensity(self) -> float:
        return self.flops / self.bytes_touched if self.bytes_touched else 0.0


def _stored_factor_bytes(a) -> int:
    if isinstance(a, np.ndarray):
        return 8 * a.size
    return a.stored_bytes


def _payload_traffic(payload) -> int:
    if isinstance(payload, (DenseBlock, LowRankBlock, Coupling)):
        return payload.nbytes_payload
    if isinstance(payload, (CompressedDense, CompressedCoupling)):
        return payload.nbytes_payload
    if isinstance(payload, (CompressedLowRank, ValrBlock)):
        stored = payload.w.stored_bytes + payload.x.stored_bytes
        return stored
    raise TypeError(f"unknown payload {type(payload).__name__}")


def estimate_work(mat) -> WorkEstimate:
    """Flops and bytes touched by one product with this container.

    Vector traffic counts 8 bytes per input read and 16 per output
    update; payload traffic counts stored bytes, so compressed
    containers report less traffic whenever their ratio exceeds 1.
    """
    flops = 0
    octets = 0
    basis_format = mat.format_tag in ("uh", "h2")
    for leaf in mat.tree.leaves:
        payload = mat.payloads[leaf.leaf_id]
        m, n = leaf.shape
        if leaf.kind == BLOCK_DENSE:
            flops += 2 * m * n
            octets += _payload_traffic(payload) + 8 * n + 16 * m
        elif not basis_format:
            k = payload.rank
            flops += 2 * n * k + k + 2 * m * k
            octets += _payload_traffic(payload) + 8 * k + 8 * n + 16 * m
        else:
            r_t, r_s = payload.shape
            flops += 2 * r_t * r_s
            octets += _payload_traffic(payload) + 8 * r_s + 16 * r_t
    if basis_format:
        for bases, out_factor in ((mat.col_bases, 8), (mat.row_bases, 16)):
            for cb in bases.values():
                if cb.rank == 0:
                    continue
                if cb.matrix is not None:
                    size = cb.cluster.size
                    flops += 2 * size * cb.rank
                    octets += _stored_factor_bytes(cb.matrix)
                    octets += out_factor * size + 8 * cb.rank
                if cb.transfers is not None:
                    for child, transfer in zip(cb.cluster.children, cb.transfers):
                        r_c = bases[child.index].rank
                        flops += 2 * r_c * cb.rank
                        octets += _stored_factor_bytes(transfer)
                        octets += 8 * cb.rank + out_factor * r_c
    return WorkEstimate(flops, octets)
