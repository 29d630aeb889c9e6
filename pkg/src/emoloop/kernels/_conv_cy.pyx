# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution kernels: im2col / col2im over float64 memoryviews.

Same contract as the numpy fallback in conv_np.py; tight C loops replace the
strided-view copy (im2col) and the per-offset slice adds (col2im).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def im2col(cnp.ndarray[cnp.float64_t, ndim=4] x, int kh, int kw, int pad):
    cdef int b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int oh = h + 2 * pad - kh + 1
    cdef int ow = w + 2 * pad - kw + 1
    out_arr = np.empty((b, c * kh * kw, oh * ow), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x)
    cdef int bi, ci, u, v, i, j, row, ii, jj
    with nogil:
        for bi in range(b):
            for ci in range(c):
                for u in range(kh):
                    for v in range(kw):
                        row = (ci * kh + u) * kw + v
                        for i in range(oh):
                            ii = i + u - pad
                            if ii < 0 or ii >= h:
                                for j in range(ow):
                                    out[bi, row, i * ow + j] = 0.0
                                continue
                            for j in range(ow):
                                jj = j + v - pad
                                if jj < 0 or jj >= w:
                                    out[bi, row, i * ow + j] = 0.0
                                else:
                                    out[bi, row, i * ow + j] = xv[bi, ci, ii, jj]
    return out_arr


def col2im(cnp.ndarray[cnp.float64_t, ndim=3] cols, int c, int h, int w,
           int kh, int kw, int pad):
    cdef int b = cols.shape[0]
    cdef int oh = h + 2 * pad - kh + 1
    cdef int ow = w + 2 * pad - kw + 1
    out_arr = np.zeros((b, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef double[:, :, ::1] cv = np.ascontiguousarray(cols)
    cdef int bi, ci, u, v, i, j, row, ii, jj
    with nogil:
        for bi in range(b):
            for ci in range(c):
                for u in range(kh):
                    for v in range(kw):
                        row = (ci * kh + u) * kw + v
                        for i in range(oh):
                            ii = i + u - pad
                            if ii < 0 or ii >= h:
                                continue
                            for j in range(ow):
                                jj = j + v - pad
                                if 0 <= jj < w:
                                    out[bi, ci, ii, jj] += cv[bi, row, i * ow + j]
    return out_arr
