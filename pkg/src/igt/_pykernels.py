"""Pure-Python/numpy versions of the compiled kernels in ``igt._ext.kernels``."""

from __future__ import annotations

import math

import numpy as np


def jacobi_eigh(a, tol=1e-10, max_sweeps=100):
    """Cyclic Jacobi eigen-decomposition of a dense symmetric matrix.

    Returns ``(eigenvalues, eigenvectors, sweeps)`` with eigenvectors as
    columns, unsorted. Iteration stops once the off-diagonal Frobenius norm
    drops below ``tol`` or after ``max_sweeps`` full sweeps.
    """
    A = np.array(a, dtype=np.float64, copy=True, order="C")
    n = A.shape[0]
    V = np.eye(n)
    sweeps = 0
    for sweep in range(max_sweeps + 1):
        sq = A * A
        np.fill_diagonal(sq, 0.0)
        off = math.sqrt(float(np.sum(sq)))
        if off < tol or sweep == max_sweeps:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p, row_q = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    return np.diagonal(A).copy(), V, sweeps


def pairs_within(a, b, cutoff):
    """All (i, j) with ``|a_i - b_j| <= cutoff``, in row-major order."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    diff = a[:, None, :] - b[None, :, :]
    d2 = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2]
    i, j = np.nonzero(d2 <= cutoff * cutoff)
    return np.stack([i, j], axis=1).astype(np.int64)


def min_dist_within(a, b, cutoff):
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(b) == 0:
        return np.zeros(len(a), dtype=bool)
    diff = a[:, None, :] - b[None, :, :]
    d2 = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2]
    return np.any(d2 <= cutoff * cutoff, axis=1)
