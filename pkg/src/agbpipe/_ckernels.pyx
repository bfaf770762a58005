# Compiled twins of the hot kernels in _kernels_py. Bit-compatible by
# construction: identical gather order, identical per-element accumulation
# order in col2im, identical float width for the median midpoint.

import numpy as np

cimport cython
cimport numpy as cnp

ctypedef fused floating:
    float
    double


@cython.boundscheck(False)
@cython.wraparound(False)
def im2col(floating[:, :, :, ::1] x, floating[:, :, ::1] out, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t b, c, i, j, oh, ow, h, w, row, base
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(kh):
                    for j in range(kw):
                        row = (c * kh + i) * kw + j
                        for oh in range(Ho):
                            h = oh * stride + i - pad
                            base = oh * Wo
                            if h < 0 or h >= H:
                                for ow in range(Wo):
                                    out[b, row, base + ow] = 0
                            else:
                                for ow in range(Wo):
                                    w = ow * stride + j - pad
                                    if w < 0 or w >= W:
                                        out[b, row, base + ow] = 0
                                    else:
                                        out[b, row, base + ow] = x[b, c, h, w]


@cython.boundscheck(False)
@cython.wraparound(False)
def col2im(floating[:, :, ::1] cols, floating[:, :, :, ::1] out, int kh, int kw, int stride, int pad):
    # out is preallocated zeros of shape [B, C, H, W]
    cdef Py_ssize_t B = out.shape[0], C = out.shape[1], H = out.shape[2], W = out.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t b, c, i, j, oh, ow, h, w, row, base
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(kh):
                    for j in range(kw):
                        row = (c * kh + i) * kw + j
                        for oh in range(Ho):
                            h = oh * stride + i - pad
                            if h < 0 or h >= H:
                                continue
                            base = oh * Wo
                            for ow in range(Wo):
                                w = ow * stride + j - pad
                                if 0 <= w < W:
                                    out[b, c, h, w] += cols[b, row, base + ow]


@cython.boundscheck(False)
@cython.wraparound(False)
def masked_median(floating[:, ::1] vals, cnp.uint8_t[:, ::1] valid, floating fill,
                  floating[::1] out, floating[::1] scratch):
    cdef Py_ssize_t S = vals.shape[0], N = vals.shape[1]
    cdef Py_ssize_t col, s, k, m
    cdef floating v
    with nogil:
        for col in range(N):
            k = 0
            for s in range(S):
                if valid[s, col]:
                    v = vals[s, col]
                    # insertion sort into scratch[0:k]
                    m = k
                    while m > 0 and scratch[m - 1] > v:
                        scratch[m] = scratch[m - 1]
                        m -= 1
                    scratch[m] = v
                    k += 1
            if k == 0:
                out[col] = fill
            else:
                out[col] = (scratch[(k - 1) // 2] + scratch[k // 2]) * <floating> 0.5
