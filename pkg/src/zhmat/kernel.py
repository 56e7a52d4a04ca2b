"""Single layer potential kernel and low-rank block approximation.

Matrix entries use a one-point quadrature of the single layer potential
between sphere panels,

    a_ij = w_i * w_j / max(|c_i - c_j|, rho * (sqrt(w_i) + sqrt(w_j))),

where the regularization radius rho * (sqrt(w_i) + sqrt(w_j)) with
rho = 0.5 keeps the singular self and neighbor interactions bounded.

Admissible blocks are approximated by adaptive cross approximation with
partial pivoting, followed by QR + truncated SVD recompression; the
retained singular values stay attached to the factors because the
rate-adaptive compression downstream needs them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import Cluster
from .geometry import Geometry

RHO = 0.5

# ACA targets a tenth of the requested block accuracy; recompression then
# truncates at 0.8 * eps so the combined error stays below eps * ||block||_F.
ACA_TOL_FACTOR = 0.1
RECOMPRESS_TOL_FACTOR = 0.8

# Blocks up to this entry count may fall back to a dense SVD when cross
# approximation stagnates.
_DENSE_FALLBACK_LIMIT = 1 << 23


def slp_entry(geom: Geometry, i: int, j: int) -> float:
    """Kernel entry for original (unpermuted) point indices i, j."""
    d = float(np.linalg.norm(geom.points[i] - geom.points[j]))
    reg = RHO * (geom.sqrt_weights[i] + geom.sqrt_weights[j])
    return float(geom.weights[i] * geom.weights[j] / max(d, reg))


def kernel_block(geom: Geometry, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Dense kernel evaluation for two original-index sets, shape (len(rows), len(cols))."""
    diff = geom.points[rows][:, None, :] - geom.points[cols][None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    reg = RHO * (geom.sqrt_weights[rows][:, None] + geom.sqrt_weights[cols][None, :])
    return geom.weights[rows][:, None] * geom.weights[cols][None, :] / np.maximum(dist, reg)


def assemble_dense(geom: Geometry, t: Cluster, s: Cluster) -> np.ndarray:
    """Dense block in cluster (permuted) ordering."""
    return kernel_block(geom, t.indices, s.indices)


@dataclass
class DenseBlock:
    """Dense payload; values kept column-major to match the storage layout."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asfortranarray(self.values, dtype=np.float64)

    @property
    def shape(self):
        return self.values.shape

    @property
    def nbytes_payload(self) -> int:
        return 8 * self.values.size


@dataclass
class LowRankBlock:
    """Rank-k factorization w @ diag(sigma) @ x.T with orthonormal w, x.

    ``u`` / ``v`` expose the conventional two-factor form u @ v.T with the
    singular values folded into u.
    """

    w: np.ndarray
    x: np.ndarray
    sigma: np.ndarray

    @property
    def rank(self) -> int:
        return self.sigma.size

    @property
    def shape(self):
        return (self.w.shape[0], self.x.shape[0])

    @property
    def u(self) -> np.ndarray:
        return self.w * self.sigma

    @property
    def v(self) -> np.ndarray:
        return self.x

    def evaluate(self) -> np.ndarray:
        return (self.w * self.sigma) @ self.x.T

    @property
    def nbytes_payload(self) -> int:
        return 8 * (self.w.size + self.x.size)


class AcaStagnation(RuntimeError):
    """Cross approximation could not find a usable pivot."""


def _aca(row_fn, col_fn, m: int, n: int, tol: float, max_rank: int):
    """Adaptive cross approximation with partial pivoting.

    ``row_fn(i)`` / ``col_fn(j)`` evaluate one kernel row / column of the
    block.  Returns raw factors (U, V) with the block approximated by
    U @ V.T; stops when the new cross update is below ``tol`` relative to
    the running Frobenius norm estimate of the approximation.
    """
    us: list[np.ndarray] = []
    vs: list[np.ndarray] = []
    used_rows = np.zeros(m, dtype=bool)
    used_cols = np.zeros(n, dtype=bool)
    fro2 = 0.0
    i = 0
    stalls = 0
    for _ in range(max_rank):
        r = row_fn(i)
        for u, v in zip(us, vs):
            r = r - u[i] * v
        r = np.where(used_cols, 0.0, r)
        j = int(np.argmax(np.abs(r)))
        pivot = r[j]
        if abs(pivot) < 1e-280 or not np.isfinite(pivot):
            used_rows[i] = True
            stalls += 1
            if stalls > 4 or used_rows.all():
                raise AcaStagnation(f"no pivot after rank {len(us)}")
            i = int(np.argmin(used_rows))  # first unused row
            continue
        c = col_fn(j)
        for u, v in zip(us, vs):
            c = c - v[j] * u
        u_new = c / pivot
        v_new = r
        un2 = float(u_new @ u_new)
        vn2 = float(v_new @ v_new)
        cross = 0.0
        for u, v in zip(us, vs):
            cross += float(u @ u_new) * float(v @ v_new)
        fro2 = max(fro2 + un2 * vn2 + 2.0 * cross, un2 * vn2)
        us.append(u_new)
        vs.append(v_new)
        used_rows[i] = True
        used_cols[j] = True
        if un2 * vn2 <= tol * tol * fro2:
            break
        if used_rows.all() or used_cols.all():
            break
        masked = np.where(used_rows, -np.inf, np.abs(u_new))
        i = int(np.argmax(masked))
    else:
        raise AcaStagnation(f"rank cap {max_rank} reached")
    return np.column_stack(us), np.column_stack(vs)


def _truncate_svd(w, sigma, xt, tol_abs: float) -> LowRankBlock:
    """Keep the smallest head of the SVD whose tail mass is below tol_abs."""
    tail2 = np.cumsum(sigma[::-1] ** 2)[::-1]  # tail2[k] = ||sigma[k:]||^2
    below = np.nonzero(tail2 <= tol_abs * tol_abs)[0]
    keep = int(below[0]) if below.size else sigma.size
    keep = max(1, keep)
    return LowRankBlock(
        w=np.ascontiguousarray(w[:, :keep]),
        x=np.ascontiguousarray(xt[:keep].T),
        sigma=sigma[:keep].copy(),
    )


def _recompress(U: np.ndarray, V: np.ndarray, eps: float) -> LowRankBlock:
    """Orthogonalize raw factors and truncate by singular value tail mass."""
    qu, ru = np.linalg.qr(U)
    qv, rv = np.linalg.qr(V)
    ww, sigma, xt = np.linalg.svd(ru @ rv.T)
    tol_abs = RECOMPRESS_TOL_FACTOR * eps * float(np.linalg.norm(sigma))
    return _truncate_svd(qu @ ww, sigma, xt @ qv.T, tol_abs)


def lowrank_approx(geom: Geometry, t: Cluster, s: Cluster, eps: float) -> LowRankBlock:
    """Low-rank approximation of the kernel block with relative accuracy eps.

    Cross approximation runs at eps/10 and the SVD recompression truncates
    at 0.8*eps, so the result satisfies ||M - w diag(sigma) x.T||_F <=
    eps * ||M||_F with the dense block M.  Stagnating cross approximation
    falls back to a dense SVD for blocks of moderate size.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    rows = t.indices
    cols = s.indices
    m, n = rows.size, cols.size
    row_fn = lambda i: kernel_block(geom, rows[i : i + 1], cols)[0]
    col_fn = lambda j: kernel_block(geom, rows, cols[j : j + 1])[:, 0]
    max_rank = min(m, n)
    try:
        U, V = _aca(row_fn, col_fn, m, n, ACA_TOL_FACTOR * eps, max_rank)
    except AcaStagnation:
        if m * n > _DENSE_FALLBACK_LIMIT:
            raise
        dense = kernel_block(geom, rows, cols)
        ww, sigma, xt = np.linalg.svd(dense, full_matrices=False)
        tol_abs = 0.9 * eps * float(np.linalg.norm(sigma))
        return _truncate_svd(ww, sigma, xt, tol_abs)
    return _recompress(U, V, eps)
