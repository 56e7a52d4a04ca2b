"""Cluster trees and block partitions.

A cluster tree recursively bisects the point index set; every cluster owns a
contiguous range of a permuted index array, so vectors restricted to a
cluster are plain slices.  A block tree pairs row and column clusters and
stops at admissible pairs (low-rank candidates) or at pairs involving a leaf
cluster (dense blocks).
"""

from __future__ import annotations

import numpy as np

from .geometry import Geometry

DEFAULT_ETA = 2.0
DEFAULT_LEAF_SIZE = 32


class Cluster:
    """Contiguous index range with an axis-aligned bounding box."""

    __slots__ = ("start", "stop", "level", "index", "bbox_min", "bbox_max", "children", "perm")

    def __init__(self, start, stop, level, bbox_min, bbox_max, perm=None):
        self.start = int(start)
        self.stop = int(stop)
        self.level = int(level)
        self.index = -1
        self.bbox_min = np.asarray(bbox_min, dtype=np.float64)
        self.bbox_max = np.asarray(bbox_max, dtype=np.float64)
        self.children = ()
        self.perm = perm

    @property
    def size(self) -> int:
        return self.stop - self.start

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def indices(self) -> np.ndarray:
        """Original point indices covered by this cluster."""
        return self.perm[self.start : self.stop]

    def diameter(self) -> float:
        return float(np.linalg.norm(self.bbox_max - self.bbox_min))

    def __repr__(self):
        return f"Cluster([{self.start}:{self.stop}], level={self.level})"


class ClusterTree:
    """Root cluster plus the index permutation and per-level listings."""

    def __init__(self, root, perm, clusters, leaves, levels):
        self.root = root
        self.perm = perm
        self.clusters = clusters  # preorder
        self.leaves = leaves
        self.levels = levels

    @property
    def n(self) -> int:
        return self.root.size

    @property
    def depth(self) -> int:
        return len(self.levels) - 1


def _bbox(points):
    return points.min(axis=0), points.max(axis=0)


def build_cluster_tree(geom: Geometry, n_min: int = DEFAULT_LEAF_SIZE) -> ClusterTree:
    """Binary cluster tree via cardinality-balanced bisection.

    Splits are along the longest bounding-box axis (lowest axis index on
    ties), each child receiving half the points, so leaves have at most
    ``n_min`` points and the tree depth is ceil(log2(n / n_min)).
    """
    if n_min < 1:
        raise ValueError("n_min must be at least 1")
    perm = np.arange(geom.n, dtype=np.int64)
    clusters: list[Cluster] = []
    leaves: list[Cluster] = []
    levels: list[list[Cluster]] = []

    def make(start, stop, level):
        pts = geom.points[perm[start:stop]]
        lo, hi = _bbox(pts)
        node = Cluster(start, stop, level, lo, hi, perm)
        node.index = len(clusters)
        clusters.append(node)
        while len(levels) <= level:
            levels.append([])
        levels[level].append(node)
        if stop - start <= n_min:
            leaves.append(node)
            return node
        axis = int(np.argmax(hi - lo))
        order = np.argsort(pts[:, axis], kind="stable")
        perm[start:stop] = perm[start:stop][order]
        mid = start + (stop - start) // 2
        node.children = (make(start, mid, level + 1), make(mid, stop, level + 1))
        return node

    root = make(0, geom.n, 0)
    return ClusterTree(root, perm, clusters, leaves, levels)


def flat_clustering(geom: Geometry, parts: int) -> ClusterTree:
    """Depth-1 tree with ``parts`` equally sized leaf children.

    Point order still follows recursive geometric bisection so that the flat
    leaves stay spatially coherent; sizes differ by at most one when ``parts``
    does not divide ``n``.
    """
    if not 0 < parts <= geom.n:
        raise ValueError("parts must be in [1, n]")
    perm = np.arange(geom.n, dtype=np.int64)
    bounds = [0]

    def split(start, stop, k):
        if k == 1:
            bounds.append(stop)
            return
        pts = geom.points[perm[start:stop]]
        lo, hi = _bbox(pts)
        axis = int(np.argmax(hi - lo))
        order = np.argsort(pts[:, axis], kind="stable")
        perm[start:stop] = perm[start:stop][order]
        kl = k // 2
        mid = start + (stop - start) * kl // k
        split(start, mid, kl)
        split(mid, stop, k - kl)

    split(0, geom.n, parts)

    lo, hi = _bbox(geom.points)
    root = Cluster(0, geom.n, 0, lo, hi, perm)
    root.index = 0
    children = []
    for i in range(parts):
        s, e = bounds[i], bounds[i + 1]
        clo, chi = _bbox(geom.points[perm[s:e]])
        child = Cluster(s, e, 1, clo, chi, perm)
        child.index = i + 1
        children.append(child)
    root.children = tuple(children)
    return ClusterTree(root, perm, [root] + children, children, [[root], children])


def bbox_distance(t: Cluster, s: Cluster) -> float:
    """Euclidean distance between the two bounding boxes (0 if they overlap)."""
    gap = np.maximum(0.0, np.maximum(t.bbox_min - s.bbox_max, s.bbox_min - t.bbox_max))
    return float(np.linalg.norm(gap))


def admissible_standard(t: Cluster, s: Cluster, eta: float = DEFAULT_ETA) -> bool:
    """min(diam t, diam s) <= eta * dist(t, s), evaluated on bounding boxes."""
    return min(t.diameter(), s.diameter()) <= eta * bbox_distance(t, s)


def admissible_weak(t: Cluster, s: Cluster) -> bool:
    """Admissible iff the index ranges differ (gives HODLR / BLR partitions)."""
    return t.start != s.start or t.stop != s.stop


BLOCK_LOWRANK = "lowrank"
BLOCK_DENSE = "dense"
BLOCK_INNER = "inner"


class BlockNode:
    __slots__ = ("row", "col", "kind", "children", "leaf_id")

    def __init__(self, row, col, kind):
        self.row = row
        self.col = col
        self.kind = kind
        self.children = ()
        self.leaf_id = -1

    @property
    def shape(self):
        return (self.row.size, self.col.size)

    def __repr__(self):
        return f"BlockNode({self.row!r} x {self.col!r}, {self.kind})"


class BlockTree:
    """Block partition with per-cluster leaf listings for the multiply loops.

    ``row_lists[c.index]`` holds the leaf blocks whose row cluster is ``c``,
    ordered by column range start; ``col_lists`` mirrors this for columns.
    """

    def __init__(self, root, leaves, row_tree, col_tree):
        self.root = root
        self.leaves = leaves
        self.row_tree = row_tree
        self.col_tree = col_tree
        self.row_lists = {}
        self.col_lists = {}
        for node in leaves:
            self.row_lists.setdefault(node.row.index, []).append(node)
            self.col_lists.setdefault(node.col.index, []).append(node)
        for lst in self.row_lists.values():
            lst.sort(key=lambda b: (b.col.start, b.col.stop))
        for lst in self.col_lists.values():
            lst.sort(key=lambda b: (b.row.start, b.row.stop))

    @property
    def n_nodes(self) -> int:
        count = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            count += 1
            stack.extend(node.children)
        return count

    def row_blocks(self, cluster) -> list:
        return self.row_lists.get(cluster.index, ())

    def col_blocks(self, cluster) -> list:
        return self.col_lists.get(cluster.index, ())


def build_block_tree(row_tree: ClusterTree, col_tree: ClusterTree, adm) -> BlockTree:
    """Recursive block partition for an admissibility predicate ``adm(t, s)``.

    A pair is a leaf when it is admissible or either cluster is a leaf;
    otherwise it splits into the cross product of the cluster children.  Row
    and column clusters always sit on equal tree levels.
    """
    leaves = []

    def rec(t, s):
        if adm(t, s):
            node = BlockNode(t, s, BLOCK_LOWRANK)
        elif t.is_leaf or s.is_leaf:
            node = BlockNode(t, s, BLOCK_DENSE)
        else:
            node = BlockNode(t, s, BLOCK_INNER)
            node.children = tuple(rec(tc, sc) for tc in t.children for sc in s.children)
            return node
        node.leaf_id = len(leaves)
        leaves.append(node)
        return node

    root = rec(row_tree.root, col_tree.root)
    return BlockTree(root, leaves, row_tree, col_tree)
