# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Must stay result-compatible with ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


def bmm(const double[:, :, ::1] a, const double[:, :, ::1] b):
    cdef Py_ssize_t nb = a.shape[0], m = a.shape[1], kk = a.shape[2], n = b.shape[2]
    if b.shape[0] != nb or b.shape[1] != kk:
        raise ValueError("bmm: shape mismatch")
    out = np.zeros((nb, m, n), dtype=np.float64)
    cdef double[:, :, ::1] c = out
    cdef Py_ssize_t p, i, k, j
    cdef double aik
    with nogil:
        for p in range(nb):
            for i in range(m):
                for k in range(kk):
                    aik = a[p, i, k]
                    for j in range(n):
                        c[p, i, j] += aik * b[p, k, j]
    return out


def jacobi_rows(double[:, ::1] w, double[:, ::1] q, double rel_tol, double abs_tol, int max_sweeps):
    """Orthogonalize the rows of ``w`` in place by plane rotations, applying
    the same rotations to ``q``. Returns the number of sweeps used, or -1."""
    cdef Py_ssize_t m = w.shape[0], n = w.shape[1], mq = q.shape[1]
    cdef Py_ssize_t p, r, t
    cdef double alpha, beta, gamma, zeta, tt, c, s, x, y
    cdef int sweep, rotated, used = -1
    with nogil:
        for sweep in range(max_sweeps):
            rotated = 0
            for p in range(m - 1):
                for r in range(p + 1, m):
                    alpha = 0.0
                    beta = 0.0
                    gamma = 0.0
                    for t in range(n):
                        x = w[p, t]
                        y = w[r, t]
                        alpha += x * x
                        beta += y * y
                        gamma += x * y
                    if fabs(gamma) <= abs_tol or fabs(gamma) <= rel_tol * sqrt(alpha * beta):
                        continue
                    rotated = 1
                    zeta = (beta - alpha) / (2.0 * gamma)
                    if zeta >= 0:
                        tt = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                    else:
                        tt = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                    c = 1.0 / sqrt(1.0 + tt * tt)
                    s = c * tt
                    for t in range(n):
                        x = w[p, t]
                        y = w[r, t]
                        w[p, t] = c * x - s * y
                        w[r, t] = s * x + c * y
                    for t in range(mq):
                        x = q[p, t]
                        y = q[r, t]
                        q[p, t] = c * x - s * y
                        q[r, t] = s * x + c * y
            if not rotated:
                used = sweep + 1
                break
    return used


def im2col(const double[:, :, :, ::1] x, int kh, int kw, int sh, int sw, int ph, int pw, int ho, int wo):
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1], h = x.shape[2], wd = x.shape[3]
    out = np.zeros((nb, ho, wo, nc, kh, kw), dtype=np.float64)
    cdef double[:, :, :, :, :, ::1] o = out
    cdef Py_ssize_t n, i, j, c, a, b, row, col
    with nogil:
        for n in range(nb):
            for i in range(ho):
                for j in range(wo):
                    for c in range(nc):
                        for a in range(kh):
                            row = i * sh + a - ph
                            if row < 0 or row >= h:
                                continue
                            for b in range(kw):
                                col = j * sw + b - pw
                                if col < 0 or col >= wd:
                                    continue
                                o[n, i, j, c, a, b] = x[n, c, row, col]
    return out


def col2im(const double[:, :, :, :, :, ::1] cols, int h, int wd, int sh, int sw, int ph, int pw):
    cdef Py_ssize_t nb = cols.shape[0], ho = cols.shape[1], wo = cols.shape[2]
    cdef Py_ssize_t nc = cols.shape[3], kh = cols.shape[4], kw = cols.shape[5]
    out = np.zeros((nb, nc, h, wd), dtype=np.float64)
    cdef double[:, :, :, ::1] o = out
    cdef Py_ssize_t n, i, j, c, a, b, row, col
    # (a, b) outermost per element so accumulation order matches the fallback
    with nogil:
        for n in range(nb):
            for c in range(nc):
                for a in range(kh):
                    for b in range(kw):
                        for i in range(ho):
                            row = i * sh + a - ph
                            if row < 0 or row >= h:
                                continue
                            for j in range(wo):
                                col = j * sw + b - pw
                                if col < 0 or col >= wd:
                                    continue
                                o[n, c, row, col] += cols[n, i, j, c, a, b]
    return out
