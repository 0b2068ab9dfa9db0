# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused float64 kernels for the autodiff hot path.

Same contracts as the `_pure` module: trailing dimension is the
reduction axis, callers pass C-contiguous (rows, cols) views.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, erf

cnp.import_array()

cdef double INV_SQRT2 = 0.7071067811865476
cdef double INV_SQRT_2PI = 0.3989422804014327


def softmax_fwd(cnp.ndarray[cnp.float64_t, ndim=2] x):
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] y = np.empty_like(x)
    cdef double[:, ::1] xv = x, yv = y
    cdef Py_ssize_t i, j
    cdef double m, s, e
    for i in range(rows):
        m = xv[i, 0]
        for j in range(1, cols):
            if xv[i, j] > m:
                m = xv[i, j]
        s = 0.0
        for j in range(cols):
            e = exp(xv[i, j] - m)
            yv[i, j] = e
            s += e
        for j in range(cols):
            yv[i, j] /= s
    return y


def softmax_bwd(cnp.ndarray[cnp.float64_t, ndim=2] y,
                cnp.ndarray[cnp.float64_t, ndim=2] gy):
    cdef Py_ssize_t rows = y.shape[0], cols = y.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gx = np.empty_like(y)
    cdef double[:, ::1] yv = y, gv = gy, ov = gx
    cdef Py_ssize_t i, j
    cdef double dot
    for i in range(rows):
        dot = 0.0
        for j in range(cols):
            dot += gv[i, j] * yv[i, j]
        for j in range(cols):
            ov[i, j] = yv[i, j] * (gv[i, j] - dot)
    return gx


def layernorm_fwd(cnp.ndarray[cnp.float64_t, ndim=2] x, double eps):
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] y = np.empty_like(x)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] inv_std = np.empty(rows)
    cdef double[:, ::1] xv = x, yv = y
    cdef double[::1] sv = inv_std
    cdef Py_ssize_t i, j
    cdef double mean, var, c, r
    for i in range(rows):
        mean = 0.0
        for j in range(cols):
            mean += xv[i, j]
        mean /= cols
        var = 0.0
        for j in range(cols):
            c = xv[i, j] - mean
            var += c * c
        var /= cols
        r = 1.0 / sqrt(var + eps)
        sv[i] = r
        for j in range(cols):
            yv[i, j] = (xv[i, j] - mean) * r
    return y, inv_std.reshape(rows, 1)


def layernorm_bwd(cnp.ndarray[cnp.float64_t, ndim=2] y,
                  cnp.ndarray[cnp.float64_t, ndim=2] inv_std,
                  cnp.ndarray[cnp.float64_t, ndim=2] gy):
    cdef Py_ssize_t rows = y.shape[0], cols = y.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gx = np.empty_like(y)
    cdef double[:, ::1] yv = y, gv = gy, ov = gx, rv = inv_std
    cdef Py_ssize_t i, j
    cdef double g_mean, dot
    for i in range(rows):
        g_mean = 0.0
        dot = 0.0
        for j in range(cols):
            g_mean += gv[i, j]
            dot += gv[i, j] * yv[i, j]
        g_mean /= cols
        dot /= cols
        for j in range(cols):
            ov[i, j] = rv[i, 0] * (gv[i, j] - g_mean - yv[i, j] * dot)
    return gx


def gelu_fwd(cnp.ndarray[cnp.float64_t, ndim=2] x):
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] y = np.empty_like(x)
    cdef double[:, ::1] xv = x, yv = y
    cdef Py_ssize_t i, j
    for i in range(rows):
        for j in range(cols):
            yv[i, j] = 0.5 * xv[i, j] * (1.0 + erf(xv[i, j] * INV_SQRT2))
    return y


def gelu_bwd(cnp.ndarray[cnp.float64_t, ndim=2] x,
             cnp.ndarray[cnp.float64_t, ndim=2] gy):
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gx = np.empty_like(x)
    cdef double[:, ::1] xv = x, gv = gy, ov = gx
    cdef Py_ssize_t i, j
    cdef double cdf, pdf
    for i in range(rows):
        for j in range(cols):
            cdf = 0.5 * (1.0 + erf(xv[i, j] * INV_SQRT2))
            pdf = INV_SQRT_2PI * exp(-0.5 * xv[i, j] * xv[i, j])
            ov[i, j] = gv[i, j] * (cdf + xv[i, j] * pdf)
    return gx
