"""Numeric hot loops with a compiled core and a NumPy fallback.

The Cython extension ``platekit.kernels._native`` is preferred when it was
built; set ``PLATEKIT_NO_NATIVE=1`` to force the pure-NumPy fallback.  Both
backends are bit-for-bit interchangeable — ``benchmarks/bench_kernels.py``
compares their speed, ``tests/test_kernels.py`` their output.
"""
import os

import numpy as np

from platekit.kernels import _fallback

if os.environ.get("PLATEKIT_NO_NATIVE"):
    _impl = _fallback
else:
    try:
        from platekit.kernels import _native as _impl
    except ImportError:
        _impl = _fallback

BACKEND = "fallback" if _impl is _fallback else "native"


def levenshtein_u32(a, b):
    """Edit distance between two sequences of uint32 symbol ids."""
    a = np.ascontiguousarray(a, dtype=np.uint32)
    b = np.ascontiguousarray(b, dtype=np.uint32)
    return int(_impl.levenshtein_u32(a, b))


def iou_matrix(boxes_a, boxes_b):
    """Pairwise IoU matrix for two arrays of (x0, y0, x1, y1) boxes."""
    a = np.ascontiguousarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.ascontiguousarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]), dtype=np.float64)
    return np.asarray(_impl.iou_matrix(a, b))


def warp_affine_u8(src, inverse_coeffs, out_h, out_w, fill=114):
    """Bilinear warp of a uint8 (H,W,C) image by an inverse affine map."""
    src = np.ascontiguousarray(src, dtype=np.uint8)
    inv = np.ascontiguousarray(inverse_coeffs, dtype=np.float64).reshape(6)
    return np.asarray(_impl.warp_affine_u8(src, inv, int(out_h), int(out_w), fill))


def rasterize_boxes(height, width, boxes):
    """Binary (H,W) occupancy of pixel centres covered by any box."""
    bits = np.zeros((int(height), int(width)), dtype=np.uint8)
    b = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    if b.shape[0]:
        _impl.rasterize_boxes(bits, b)
    return bits
