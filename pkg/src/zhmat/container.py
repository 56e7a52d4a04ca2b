"""Binary container files for hierarchical matrices.

Layout (all integers little-endian):

    magic   4 bytes  b"ZHM1"
    tag     u8       1 = flat H, 2 = shared bases, 3 = nested bases
    flags   u8       bit 0: row and column cluster trees are one object
    pad     u16      zero
    n       u64      matrix dimension
    eps     f64      construction tolerance
    cluster tree(s): permutation (n x i64) followed by the preorder node
        records {start u64, stop u64, level u32, n_children u32,
        bbox_min 3 x f64, bbox_max 3 x f64}; children follow their parent
        recursively, so the count alone reconstructs the topology
    block tree: preorder records {kind u8 (0 inner, 1 low-rank, 2 dense),
        row cluster index u64, col cluster index u64, n_children u32}
    payloads, one per block-tree leaf in leaf order; for the shared and
        nested formats, the per-cluster bases follow (rows then columns)

Every array is either raw (tag 0: shape + float64 bytes) or one codec
buffer per the byte layouts documented in :mod:`zhmat.fpcodec`, so
compressed matrices round-trip without decoding.
"""

from __future__ import annotations

import struct

import numpy as np

from .clustering import (
    BLOCK_DENSE,
    BLOCK_INNER,
    BLOCK_LOWRANK,
    BlockNode,
    BlockTree,
    Cluster,
    ClusterTree,
)
from .fpcodec import (
    CompressedArray,
    ValrBlock,
    ValrFactor,
    deserialize_buffer,
    serialize_buffer,
)
from .formats import (
    ClusterBasis,
    CompressedCoupling,
    CompressedDense,
    CompressedLowRank,
    Coupling,
    H2Matrix,
    HMatrix,
    UniformHMatrix,
)
from .kernel import DenseBlock, LowRankBlock

MAGIC = b"ZHM1"

_FORMAT_TAGS = {"h": 1, "uh": 2, "h2": 3}
_TAG_FORMATS = {v: k for k, v in _FORMAT_TAGS.items()}

_ARR_RAW = 0
_ARR_BUFFER = 1
_ARR_VALR = 2

_PAYLOAD_DENSE = 0
_PAYLOAD_LOWRANK = 1
_PAYLOAD_COUPLING = 2

_BLOCK_KINDS = {BLOCK_INNER: 0, BLOCK_LOWRANK: 1, BLOCK_DENSE: 2}
_KIND_BLOCKS = {v: k for k, v in _BLOCK_KINDS.items()}


class _Writer:
    def __init__(self):
        self.chunks = []

    def raw(self, data: bytes):
        self.chunks.append(data)

    def pack(self, fmt: str, *vals):
        self.chunks.append(struct.pack("<" + fmt, *vals))

    def array(self, a: np.ndarray):
        a = np.ascontiguousarray(a, dtype=np.float64)
        self.pack("B", len(a.shape))
        for d in a.shape:
            self.pack("Q", d)
        self.raw(a.tobytes())

    def getvalue(self) -> bytes:
        return b"".join(self.chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def unpack(self, fmt: str):
        fmt = "<" + fmt
        size = struct.calcsize(fmt)
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals if len(vals) > 1 else vals[0]

    def bytes(self, count: int) -> bytes:
        out = self.data[self.pos : self.pos + count]
        if len(out) != count:
            raise ValueError("container truncated")
        self.pos += count
        return out

    def array(self) -> np.ndarray:
        ndim = self.unpack("B")
        shape = tuple(self.unpack("Q") for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(self.bytes(8 * count), dtype=np.float64)
        return a.reshape(shape).copy()


# ----------------------------------------------------------------------------
# cluster and block trees


def _write_cluster_tree(w: _Writer, ct: ClusterTree):
    w.pack("Q", ct.n)
    w.raw(np.ascontiguousarray(ct.perm, dtype=np.int64).tobytes())
    w.pack("Q", len(ct.clusters))
    for c in ct.clusters:  # preorder
        w.pack("QQII", c.start, c.stop, c.level, len(c.children))
        w.raw(np.ascontiguousarray(c.bbox_min, dtype=np.float64).tobytes())
        w.raw(np.ascontiguousarray(c.bbox_max, dtype=np.float64).tobytes())


def _read_cluster_tree(r: _Reader) -> ClusterTree:
    n = r.unpack("Q")
    perm = np.frombuffer(r.bytes(8 * n), dtype=np.int64).copy()
    total = r.unpack("Q")
    clusters: list[Cluster] = []
    leaves: list[Cluster] = []
    levels: list[list[Cluster]] = []

    def read_node() -> Cluster:
        start, stop, level, n_children = r.unpack("QQII")
        lo = np.frombuffer(r.bytes(24), dtype=np.float64).copy()
        hi = np.frombuffer(r.bytes(24), dtype=np.float64).copy()
        node = Cluster(start, stop, level, lo, hi, perm)
        node.index = len(clusters)
        clusters.append(node)
        while len(levels) <= level:
            levels.append([])
        levels[level].append(node)
        if n_children:
            node.children = tuple(read_node() for _ in range(n_children))
        else:
            leaves.append(node)
        return node

    root = read_node()
    if len(clusters) != total:
        raise ValueError("cluster tree node count mismatch")
    return ClusterTree(root, perm, clusters, leaves, levels)


def _write_block_tree(w: _Writer, bt: BlockTree):
    def write_node(node: BlockNode):
        w.pack("BQQI", _BLOCK_KINDS[node.kind], node.row.index,
               node.col.index, len(node.children))
        for child in node.children:
            write_node(child)

    write_node(bt.root)


def _read_block_tree(r: _Reader, row_tree: ClusterTree, col_tree: ClusterTree) -> BlockTree:
    leaves = []

    def read_node() -> BlockNode:
        kind, ri, ci, n_children = r.unpack("BQQI")
        node = BlockNode(row_tree.clusters[ri], col_tree.clusters[ci],
                         _KIND_BLOCKS[kind])
        if n_children:
            node.children = tuple(read_node() for _ in range(n_children))
        else:
            node.leaf_id = len(leaves)
            leaves.append(node)
        return node

    root = read_node()
    return BlockTree(root, leaves, row_tree, col_tree)


# ----------------------------------------------------------------------------
# payload and basis records


def _write_factor(w: _Writer, a):
    """ndarray | CompressedArray | ValrFactor"""
    if isinstance(a, np.ndarray):
        w.pack("B", _ARR_RAW)
        w.array(a)
    elif isinstance(a, CompressedArray):
        w.pack("B", _ARR_BUFFER)
        w.pack("QQ", *a.shape)
        blob = serialize_buffer(a.buf)
        w.pack("Q", len(blob))
        w.raw(blob)
    elif isinstance(a, ValrFactor):
        w.pack("B", _ARR_VALR)
        w.pack("QQ", a.nrows, a.rank)
        for buf in a.buffers:
            blob = serialize_buffer(buf)
            w.pack("Q", len(blob))
            w.raw(blob)
    else:
        raise TypeError(f"cannot serialize factor {type(a).__name__}")


def _read_factor(r: _Reader):
    tag = r.unpack("B")
    if tag == _ARR_RAW:
        return r.array()
    if tag == _ARR_BUFFER:
        m, k = r.unpack("QQ")
        blob = r.bytes(r.unpack("Q"))
        buf, _ = deserialize_buffer(blob)
        return CompressedArray((m, k), buf)
    if tag == _ARR_VALR:
        nrows, rank = r.unpack("QQ")
        buffers = []
        for _ in range(rank):
            blob = r.bytes(r.unpack("Q"))
            buf, _ = deserialize_buffer(blob)
            buffers.append(buf)
        return ValrFactor(nrows, tuple(buffers))
    raise ValueError(f"unknown factor tag {tag}")


def _write_payload(w: _Writer, payload):
    if isinstance(payload, DenseBlock):
        w.pack("BB", _PAYLOAD_DENSE, 0)
        w.array(payload.values)
    elif isinstance(payload, CompressedDense):
        w.pack("BB", _PAYLOAD_DENSE, 1)
        _write_factor(w, payload.data)
    elif isinstance(payload, LowRankBlock):
        w.pack("BB", _PAYLOAD_LOWRANK, 0)
        _write_factor(w, payload.w)
        _write_factor(w, payload.x)
        w.array(payload.sigma)
    elif isinstance(payload, CompressedLowRank):
        w.pack("BB", _PAYLOAD_LOWRANK, 1)
        _write_factor(w, payload.w)
        _write_factor(w, payload.x)
        w.array(payload.sigma)
    elif isinstance(payload, ValrBlock):
        w.pack("BB", _PAYLOAD_LOWRANK, 2)
        _write_factor(w, payload.w)
        _write_factor(w, payload.x)
        w.array(payload.sigma)
        w.array(payload.targets)
    elif isinstance(payload, Coupling):
        w.pack("BB", _PAYLOAD_COUPLING, 0)
        w.array(payload.values)
    elif isinstance(payload, CompressedCoupling):
        w.pack("BB", _PAYLOAD_COUPLING, 1)
        _write_factor(w, payload.data)
    else:
        raise TypeError(f"cannot serialize payload {type(payload).__name__}")


def _read_payload(r: _Reader):
    family, variant = r.unpack("BB")
    if family == _PAYLOAD_DENSE:
        if variant == 0:
            return DenseBlock(r.array())
        return CompressedDense(_read_factor(r))
    if family == _PAYLOAD_LOWRANK:
        w = _read_factor(r)
        x = _read_factor(r)
        sigma = r.array()
        if variant == 0:
            return LowRankBlock(w, x, sigma)
        if variant == 1:
            return CompressedLowRank(w, x, sigma)
        return ValrBlock(w, x, sigma, r.array())
    if family == _PAYLOAD_COUPLING:
        if variant == 0:
            return Coupling(r.array())
        return CompressedCoupling(_read_factor(r))
    raise ValueError(f"unknown payload family {family}")


def _write_bases(w: _Writer, bases: dict, tree: ClusterTree):
    for c in tree.clusters:  # preorder: index order by construction
        cb = bases[c.index]
        w.array(cb.sigma)
        if cb.matrix is None:
            w.pack("B", 0)
        else:
            w.pack("B", 1)
            _write_factor(w, cb.matrix)
        if cb.transfers is None:
            w.pack("I", 0xFFFFFFFF)
        else:
            w.pack("I", len(cb.transfers))
            for t in cb.transfers:
                _write_factor(w, t)


def _read_bases(r: _Reader, tree: ClusterTree) -> dict:
    bases = {}
    for c in tree.clusters:
        sigma = r.array()
        matrix = _read_factor(r) if r.unpack("B") else None
        n_transfers = r.unpack("I")
        if n_transfers == 0xFFFFFFFF:
            transfers = None
        else:
            transfers = tuple(_read_factor(r) for _ in range(n_transfers))
        bases[c.index] = ClusterBasis(c, matrix, sigma, transfers)
    return bases


# ----------------------------------------------------------------------------
# public interface


def save_matrix(mat, path) -> None:
    """Write any container (plain or compressed) to ``path``."""
    w = _Writer()
    w.raw(MAGIC)
    shared = mat.tree.row_tree is mat.tree.col_tree
    w.pack("BBH", _FORMAT_TAGS[mat.format_tag], 1 if shared else 0, 0)
    w.pack("Q", mat.shape[0])
    w.pack("d", mat.eps)
    _write_cluster_tree(w, mat.tree.row_tree)
    if not shared:
        _write_cluster_tree(w, mat.tree.col_tree)
    _write_block_tree(w, mat.tree)
    for payload in mat.payloads:
        _write_payload(w, payload)
    if mat.format_tag in ("uh", "h2"):
        _write_bases(w, mat.row_bases, mat.tree.row_tree)
        _write_bases(w, mat.col_bases, mat.tree.col_tree)
    with open(path, "wb") as fh:
        fh.write(w.getvalue())


def load_matrix(path):
    """Read a container written by :func:`save_matrix`."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.bytes(4) != MAGIC:
        raise ValueError("not a matrix container file")
    tag, flags, _ = r.unpack("BBH")
    fmt = _TAG_FORMATS.get(tag)
    if fmt is None:
        raise ValueError(f"unknown format tag {tag}")
    n = r.unpack("Q")
    eps = r.unpack("d")
    row_tree = _read_cluster_tree(r)
    col_tree = row_tree if flags & 1 else _read_cluster_tree(r)
    if row_tree.n != n:
        raise ValueError("dimension mismatch in container header")
    bt = _read_block_tree(r, row_tree, col_tree)
    payloads = [_read_payload(r) for _ in range(len(bt.leaves))]
    if fmt == "h":
        return HMatrix(bt, eps, payloads)
    row_bases = _read_bases(r, row_tree)
    col_bases = _read_bases(r, col_tree)
    cls = UniformHMatrix if fmt == "uh" else H2Matrix
    return cls(bt, eps, payloads, row_bases, col_bases)
