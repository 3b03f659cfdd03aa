# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col / col2im and per-channel 256-bin histograms.

Same contracts as :mod:`kernsat._ext.pure`. Loops run in a fixed order so
results are reproducible run to run.
"""
import numpy as np
from cython cimport floating


def im2col(floating[:, :, :, ::1] x, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t OH = (H + 2 * pad - k) // stride + 1
    cdef Py_ssize_t OW = (W + 2 * pad - k) // stride + 1
    if floating is float:
        out = np.zeros((N * OH * OW, C * k * k), dtype=np.float32)
    else:
        out = np.zeros((N * OH * OW, C * k * k), dtype=np.float64)
    cdef floating[:, ::1] cols = out
    cdef Py_ssize_t n, c, i, j, oh, ow, row, hi, wi, base
    with nogil:
        for n in range(N):
            for oh in range(OH):
                for ow in range(OW):
                    row = (n * OH + oh) * OW + ow
                    for c in range(C):
                        for i in range(k):
                            hi = oh * stride - pad + i
                            if hi < 0 or hi >= H:
                                continue
                            base = (c * k + i) * k
                            for j in range(k):
                                wi = ow * stride - pad + j
                                if wi >= 0 and wi < W:
                                    cols[row, base + j] = x[n, c, hi, wi]
    return out


def col2im(floating[:, ::1] cols, tuple shape, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t N = shape[0], C = shape[1], H = shape[2], W = shape[3]
    cdef Py_ssize_t OH = (H + 2 * pad - k) // stride + 1
    cdef Py_ssize_t OW = (W + 2 * pad - k) // stride + 1
    if cols.shape[0] != N * OH * OW or cols.shape[1] != C * k * k:
        raise ValueError("column matrix does not match the requested image shape")
    if floating is float:
        out = np.zeros((N, C, H, W), dtype=np.float32)
    else:
        out = np.zeros((N, C, H, W), dtype=np.float64)
    cdef floating[:, :, :, ::1] dx = out
    cdef Py_ssize_t n, c, i, j, oh, ow, row, hi, wi, base
    with nogil:
        for n in range(N):
            for oh in range(OH):
                for ow in range(OW):
                    row = (n * OH + oh) * OW + ow
                    for c in range(C):
                        for i in range(k):
                            hi = oh * stride - pad + i
                            if hi < 0 or hi >= H:
                                continue
                            base = (c * k + i) * k
                            for j in range(k):
                                wi = ow * stride - pad + j
                                if wi >= 0 and wi < W:
                                    dx[n, c, hi, wi] += cols[row, base + j]
    return out


def channel_histograms(const unsigned char[:, :, ::1] px):
    cdef Py_ssize_t n = px.shape[0], c = px.shape[1], p = px.shape[2]
    out = np.zeros((n, c, 256), dtype=np.int64)
    cdef long long[:, :, ::1] h = out
    cdef Py_ssize_t a, b, q
    with nogil:
        for a in range(n):
            for b in range(c):
                for q in range(p):
                    h[a, b, px[a, b, q]] += 1
    return out
