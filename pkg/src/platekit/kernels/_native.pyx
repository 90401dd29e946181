# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the hot loops in ``_fallback``.

Keep expressions structurally identical to the NumPy versions so both
backends return bit-identical results (the build disables FP contraction).
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor

cnp.import_array()


def levenshtein_u32(const cnp.uint32_t[::1] a, const cnp.uint32_t[::1] b):
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n = b.shape[0]
    if m == 0:
        return n
    if n == 0:
        return m
    prev_arr = np.arange(n + 1, dtype=np.int64)
    cur_arr = np.empty(n + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] prev = prev_arr
    cdef cnp.int64_t[::1] cur = cur_arr
    cdef cnp.int64_t[::1] tmp
    cdef Py_ssize_t i, j
    cdef cnp.int64_t cost
    for i in range(m):
        cur[0] = i + 1
        for j in range(1, n + 1):
            cost = prev[j - 1] + (a[i] != b[j - 1])
            if prev[j] + 1 < cost:
                cost = prev[j] + 1
            if cur[j - 1] + 1 < cost:
                cost = cur[j - 1] + 1
            cur[j] = cost
        tmp = prev
        prev = cur
        cur = tmp
    return int(prev[n])


def iou_matrix(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t na = a.shape[0]
    cdef Py_ssize_t nb = b.shape[0]
    out_arr = np.zeros((na, nb), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double ax0, ay0, ax1, ay1, area_a, iw, ih, inter, union
    for i in range(na):
        ax0 = a[i, 0]
        ay0 = a[i, 1]
        ax1 = a[i, 2]
        ay1 = a[i, 3]
        area_a = (ax1 - ax0) * (ay1 - ay0)
        for j in range(nb):
            iw = min(ax1, b[j, 2]) - max(ax0, b[j, 0])
            ih = min(ay1, b[j, 3]) - max(ay0, b[j, 1])
            if iw < 0.0:
                iw = 0.0
            if ih < 0.0:
                ih = 0.0
            inter = iw * ih
            if inter > 0.0:
                union = area_a + (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1]) - inter
                out[i, j] = inter / union
    return out_arr


def warp_affine_u8(const unsigned char[:, :, ::1] src, const double[::1] inv,
                   Py_ssize_t out_h, Py_ssize_t out_w, unsigned char fill):
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t nc = src.shape[2]
    out_arr = np.empty((out_h, out_w, nc), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] out = out_arr
    cdef double ca = inv[0], cb = inv[1], cc = inv[2]
    cdef double cd = inv[3], ce = inv[4], cf = inv[5]
    cdef Py_ssize_t i, j, k, x0, y0, x1, y1
    cdef double cx, cy, sx, sy, fx, fy, v
    for i in range(out_h):
        for j in range(out_w):
            cx = j + 0.5
            cy = i + 0.5
            sx = ca * cx + cb * cy + cc - 0.5
            sy = cd * cx + ce * cy + cf - 0.5
            if sx < 0.0 or sx > w - 1.0 or sy < 0.0 or sy > h - 1.0:
                for k in range(nc):
                    out[i, j, k] = fill
                continue
            x0 = <Py_ssize_t>floor(sx)
            y0 = <Py_ssize_t>floor(sy)
            x1 = x0 + 1 if x0 + 1 < w else w - 1
            y1 = y0 + 1 if y0 + 1 < h else h - 1
            fx = sx - x0
            fy = sy - y0
            for k in range(nc):
                v = (1.0 - fy) * ((1.0 - fx) * src[y0, x0, k] + fx * src[y0, x1, k]) \
                    + fy * ((1.0 - fx) * src[y1, x0, k] + fx * src[y1, x1, k])
                out[i, j, k] = <unsigned char>(v + 0.5)
    return out_arr


def rasterize_boxes(cnp.uint8_t[:, ::1] bits, const double[:, ::1] boxes):
    cdef Py_ssize_t h = bits.shape[0]
    cdef Py_ssize_t w = bits.shape[1]
    cdef Py_ssize_t k, i, j, i0, i1, j0, j1
    for k in range(boxes.shape[0]):
        j0 = <Py_ssize_t>ceil(boxes[k, 0] - 0.5)
        j1 = <Py_ssize_t>ceil(boxes[k, 2] - 0.5)
        i0 = <Py_ssize_t>ceil(boxes[k, 1] - 0.5)
        i1 = <Py_ssize_t>ceil(boxes[k, 3] - 0.5)
        if j0 < 0:
            j0 = 0
        if i0 < 0:
            i0 = 0
        if j1 > w:
            j1 = w
        if i1 > h:
            i1 = h
        for i in range(i0, i1):
            for j in range(j0, j1):
                bits[i, j] = 1
    return np.asarray(bits)
