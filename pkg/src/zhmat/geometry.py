"""Panel geometry on the unit sphere.

The model problem discretizes the sphere by refining a regular icosahedron:
every refinement step splits each triangle into four and lifts the new edge
midpoints back onto the sphere.  Collocation points are the (flat) triangle
centroids, quadrature weights the (flat) triangle areas, so a refinement
level ``r`` yields ``n = 20 * 4**r`` points.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

_PHI = (1.0 + np.sqrt(5.0)) / 2.0

# Regular icosahedron from three golden-ratio rectangles, normalized to the
# unit sphere below.
_ICO_VERTICES = np.array(
    [
        (-1.0, _PHI, 0.0),
        (1.0, _PHI, 0.0),
        (-1.0, -_PHI, 0.0),
        (1.0, -_PHI, 0.0),
        (0.0, -1.0, _PHI),
        (0.0, 1.0, _PHI),
        (0.0, -1.0, -_PHI),
        (0.0, 1.0, -_PHI),
        (_PHI, 0.0, -1.0),
        (_PHI, 0.0, 1.0),
        (-_PHI, 0.0, -1.0),
        (-_PHI, 0.0, 1.0),
    ],
    dtype=np.float64,
)

_ICO_FACES = np.array(
    [
        (0, 11, 5),
        (0, 5, 1),
        (0, 1, 7),
        (0, 7, 10),
        (0, 10, 11),
        (1, 5, 9),
        (5, 11, 4),
        (11, 10, 2),
        (10, 7, 6),
        (7, 1, 8),
        (3, 9, 4),
        (3, 4, 2),
        (3, 2, 6),
        (3, 6, 8),
        (3, 8, 9),
        (4, 9, 5),
        (2, 4, 11),
        (6, 2, 10),
        (8, 6, 7),
        (9, 8, 1),
    ],
    dtype=np.int64,
)

MAX_REFINEMENT = 8

_GEO_MAGIC = b"ZGEO"
_GEO_VERSION = 1


@dataclass
class Geometry:
    """Collocation points with quadrature weights.

    ``points`` has shape (n, 3) and ``weights`` shape (n,); both are float64.
    ``sqrt_weights`` is cached because the kernel regularization uses it for
    every entry evaluation.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError("points must have shape (n, 3)")
        if self.weights.shape != (self.points.shape[0],):
            raise ValueError("weights must have shape (n,)")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points must be finite")
        if not np.all(self.weights > 0.0):
            raise ValueError("weights must be positive")
        self.sqrt_weights = np.sqrt(self.weights)

    @property
    def n(self) -> int:
        return self.points.shape[0]


def _subdivide(vertices: np.ndarray) -> np.ndarray:
    """Split every triangle into four, new vertices lifted to the sphere.

    ``vertices`` is a triangle soup of shape (nt, 3, 3); sharing of edge
    midpoints is irrelevant here because only centroids and areas survive.
    """
    a, b, c = vertices[:, 0], vertices[:, 1], vertices[:, 2]

    def mid(u, v):
        m = 0.5 * (u + v)
        return m / np.linalg.norm(m, axis=1, keepdims=True)

    ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
    quads = np.stack(
        [
            np.stack([a, ab, ca], axis=1),
            np.stack([ab, b, bc], axis=1),
            np.stack([ca, bc, c], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ],
        axis=1,
    )
    return quads.reshape(-1, 3, 3)


def build_geometry(refinement: int) -> Geometry:
    """Subdivided icosahedron with ``20 * 4**refinement`` panels."""
    if not 0 <= refinement <= MAX_REFINEMENT:
        raise ValueError(f"refinement must be in [0, {MAX_REFINEMENT}]")
    verts = _ICO_VERTICES / np.linalg.norm(_ICO_VERTICES, axis=1, keepdims=True)
    tris = verts[_ICO_FACES]
    for _ in range(refinement):
        tris = _subdivide(tris)
    centroids = tris.mean(axis=1)
    cross = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    return Geometry(points=centroids, weights=areas)


def mesh_width(refinement: int) -> float:
    """Longest panel edge at the given refinement level."""
    verts = _ICO_VERTICES / np.linalg.norm(_ICO_VERTICES, axis=1, keepdims=True)
    tris = verts[_ICO_FACES]
    for _ in range(refinement):
        tris = _subdivide(tris)
    edges = np.stack(
        [
            tris[:, 1] - tris[:, 0],
            tris[:, 2] - tris[:, 1],
            tris[:, 0] - tris[:, 2],
        ]
    )
    return float(np.linalg.norm(edges, axis=2).max())


def save_geometry(geom: Geometry, path) -> None:
    """Write a point-weight file.

    Layout (little-endian): magic ``ZGEO``, u16 version, u16 reserved,
    u64 count, then ``count`` records of four float64 values (x, y, z, weight).
    """
    header = _GEO_MAGIC + struct.pack("<HHQ", _GEO_VERSION, 0, geom.n)
    records = np.hstack([geom.points, geom.weights[:, None]]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())


def load_geometry(path) -> Geometry:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _GEO_MAGIC:
        raise ValueError("not a geometry file (bad magic)")
    version, _, count = struct.unpack("<HHQ", raw[4:16])
    if version != _GEO_VERSION:
        raise ValueError(f"unsupported geometry file version {version}")
    data = np.frombuffer(raw[16:], dtype="<f8")
    if data.size != 4 * count:
        raise ValueError("geometry file truncated")
    records = data.reshape(count, 4)
    return Geometry(points=records[:, :3].copy(), weights=records[:, 3].copy())
