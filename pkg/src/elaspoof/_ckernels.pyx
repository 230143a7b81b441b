# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled im2col / col2im / max-pool kernels (NHWC, float64).

Loop nesting mirrors ``_kernels_py`` so both backends add in the same order.
"""

import numpy as np
from libc.string cimport memcpy


def im2col(const double[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride):
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t OH = (H - kh) // stride + 1
    cdef Py_ssize_t OW = (W - kw) // stride + 1
    out = np.empty((B, OH, OW, kh, kw, C), dtype=np.float64)
    cdef double[:, :, :, :, :, ::1] o = out
    cdef Py_ssize_t b, i, j, u
    cdef size_t row_bytes = kw * C * sizeof(double)
    if B == 0 or OH <= 0 or OW <= 0:
        return out
    with nogil:
        for b in range(B):
            for i in range(OH):
                for j in range(OW):
                    for u in range(kh):
                        memcpy(&o[b, i, j, u, 0, 0], &x[b, i * stride + u, j * stride, 0], row_bytes)
    return out


def col2im(const double[:, :, :, :, :, ::1] cols, Py_ssize_t height, Py_ssize_t width, Py_ssize_t stride):
    cdef Py_ssize_t B = cols.shape[0], OH = cols.shape[1], OW = cols.shape[2]
    cdef Py_ssize_t kh = cols.shape[3], kw = cols.shape[4], C = cols.shape[5]
    dx_arr = np.zeros((B, height, width, C), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, i, j, u, v, c, p
    with nogil:
        for b in range(B):
            for u in range(kh):
                for v in range(kw):
                    for i in range(OH):
                        p = i * stride + u
                        for j in range(OW):
                            for c in range(C):
                                dx[b, p, j * stride + v, c] += cols[b, i, j, u, v, c]
    return dx_arr


def maxpool_forward(const double[:, :, :, ::1] x, Py_ssize_t ph, Py_ssize_t pw, Py_ssize_t stride):
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t OH = (H - ph) // stride + 1
    cdef Py_ssize_t OW = (W - pw) // stride + 1
    out_arr = np.empty((B, OH, OW, C), dtype=np.float64)
    idx_arr = np.empty((B, OH, OW, C), dtype=np.int64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef long long[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t b, i, j, c, u, v, r, q, best_at
    cdef double best, val
    with nogil:
        for b in range(B):
            for i in range(OH):
                for j in range(OW):
                    for c in range(C):
                        r = i * stride
                        q = j * stride
                        best = x[b, r, q, c]
                        best_at = r * W + q
                        for u in range(ph):
                            for v in range(pw):
                                val = x[b, r + u, q + v, c]
                                if val > best:
                                    best = val
                                    best_at = (r + u) * W + q + v
                        out[b, i, j, c] = best
                        idx[b, i, j, c] = best_at
    return out_arr, idx_arr


def maxpool_backward(const long long[:, :, :, ::1] argmax, const double[:, :, :, ::1] grad_out,
                     Py_ssize_t height, Py_ssize_t width, bint overlapping=True):
    cdef Py_ssize_t B = grad_out.shape[0], OH = grad_out.shape[1], OW = grad_out.shape[2], C = grad_out.shape[3]
    gi_arr = np.zeros((B, height * width, C), dtype=np.float64)
    cdef double[:, :, ::1] gi = gi_arr
    cdef Py_ssize_t b, i, j, c
    with nogil:
        for b in range(B):
            for i in range(OH):
                for j in range(OW):
                    for c in range(C):
                        gi[b, argmax[b, i, j, c], c] += grad_out[b, i, j, c]
    return gi_arr.reshape(B, height, width, C)
