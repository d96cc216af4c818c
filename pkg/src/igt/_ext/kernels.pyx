# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; must stay numerically interchangeable with igt._pykernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


def jacobi_eigh(a, double tol=1e-10, int max_sweeps=100):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] A = np.array(a, dtype=np.float64, copy=True, order="C")
    cdef Py_ssize_t n = A.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] V = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] Am = A
    cdef double[:, ::1] Vm = V
    cdef Py_ssize_t p, q, k
    cdef double off, apq, theta, t, c, s, akp, akq, app, aqq
    cdef int sweep, sweeps = 0
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += Am[p, q] * Am[p, q]
        if sqrt(off) < tol:
            break
        if sweep == max_sweeps:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = Am[p, q]
                if apq == 0.0:
                    continue
                app = Am[p, p]
                aqq = Am[q, q]
                theta = (aqq - app) / (2.0 * apq)
                t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = Am[k, p]
                    akq = Am[k, q]
                    Am[k, p] = c * akp - s * akq
                    Am[k, q] = s * akp + c * akq
                for k in range(n):
                    akp = Am[p, k]
                    akq = Am[q, k]
                    Am[p, k] = c * akp - s * akq
                    Am[q, k] = s * akp + c * akq
                Am[p, q] = 0.0
                Am[q, p] = 0.0
                for k in range(n):
                    akp = Vm[k, p]
                    akq = Vm[k, q]
                    Vm[k, p] = c * akp - s * akq
                    Vm[k, q] = s * akp + c * akq
    return np.diagonal(A).copy(), V, sweeps


def pairs_within(a, b, double cutoff):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] X = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Y = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[:, ::1] Xm = X
    cdef double[:, ::1] Ym = Y
    cdef Py_ssize_t na = X.shape[0], nb = Y.shape[0], i, j, m = 0
    cdef double dx, dy, dz, d2, c2 = cutoff * cutoff
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.empty((na * nb if na * nb > 0 else 1, 2), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] om = out
    for i in range(na):
        for j in range(nb):
            dx = Xm[i, 0] - Ym[j, 0]
            dy = Xm[i, 1] - Ym[j, 1]
            dz = Xm[i, 2] - Ym[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 <= c2:
                om[m, 0] = i
                om[m, 1] = j
                m += 1
    return out[:m].copy()


def min_dist_within(a, b, double cutoff):
    """Boolean mask over rows of ``a``: True where some row of ``b`` lies within cutoff."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] X = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Y = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[:, ::1] Xm = X
    cdef double[:, ::1] Ym = Y
    cdef Py_ssize_t na = X.shape[0], nb = Y.shape[0], i, j
    cdef double dx, dy, dz, c2 = cutoff * cutoff
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] out = np.zeros(na, dtype=np.uint8)
    for i in range(na):
        for j in range(nb):
            dx = Xm[i, 0] - Ym[j, 0]
            dy = Xm[i, 1] - Ym[j, 1]
            dz = Xm[i, 2] - Ym[j, 2]
            if dx * dx + dy * dy + dz * dz <= c2:
                out[i] = 1
                break
    return out.astype(bool)
