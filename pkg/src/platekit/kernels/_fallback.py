"""Pure-NumPy implementations of the hot kernels.

Every function here mirrors its compiled twin in ``_native.pyx`` operation
for operation; the two backends must stay bit-for-bit interchangeable
(see tests/test_kernels.py).
"""
import numpy as np


def levenshtein_u32(a, b):
    """Edit distance between two uint32 sequences, two-row DP.

    The left-neighbour (insertion) dependency is resolved with the running
    minimum trick: cur[j] = min_k<=j (cur0[k] + (j - k)).
    """
    m, n = len(a), len(b)
    if m == 0:
        return int(n)
    if n == 0:
        return int(m)
    idx = np.arange(n, dtype=np.int64)
    prev = np.arange(n + 1, dtype=np.int64)
    for i in range(m):
        cur = np.minimum(prev[:-1] + (b != a[i]), prev[1:] + 1)
        cur[0] = min(cur[0], i + 2)
        cur = np.minimum(cur, np.minimum.accumulate(cur - idx) + idx)
        prev = np.empty(n + 1, dtype=np.int64)
        prev[0] = i + 1
        prev[1:] = cur
    return int(prev[-1])


def iou_matrix(a, b):
    """Pairwise IoU of (Na,4) x (Nb,4) corner-format boxes."""
    ax0, ay0, ax1, ay1 = (a[:, k][:, None] for k in range(4))
    bx0, by0, bx1, by1 = (b[:, k][None, :] for k in range(4))
    iw = np.minimum(ax1, bx1) - np.maximum(ax0, bx0)
    ih = np.minimum(ay1, by1) - np.maximum(ay0, by0)
    iw = np.maximum(iw, 0.0)
    ih = np.maximum(ih, 0.0)
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(inter > 0.0, inter / np.where(union > 0.0, union, 1.0), 0.0)
    return out


def warp_affine_u8(src, inv, out_h, out_w, fill):
    """Inverse-mapped bilinear warp of a (H,W,C) uint8 image.

    ``inv`` holds 6 coefficients (a,b,c,d,e,f) mapping an output pixel
    centre (x,y) to source coordinates sx = a*x + b*y + c, sy = d*x + e*y + f
    (continuous, centre-of-pixel convention).  Samples outside the source
    are filled with ``fill``.
    """
    h, w = src.shape[0], src.shape[1]
    jj, ii = np.meshgrid(
        np.arange(out_w, dtype=np.float64), np.arange(out_h, dtype=np.float64)
    )
    cx = jj + 0.5
    cy = ii + 0.5
    sx = inv[0] * cx + inv[1] * cy + inv[2] - 0.5
    sy = inv[3] * cx + inv[4] * cy + inv[5] - 0.5
    inside = (sx >= 0.0) & (sx <= w - 1.0) & (sy >= 0.0) & (sy <= h - 1.0)
    sxc = np.where(inside, sx, 0.0)
    syc = np.where(inside, sy, 0.0)
    x0 = np.floor(sxc).astype(np.int64)
    y0 = np.floor(syc).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sxc - x0)[..., None]
    fy = (syc - y0)[..., None]
    s = src.astype(np.float64)
    v = (1.0 - fy) * ((1.0 - fx) * s[y0, x0] + fx * s[y0, x1]) + fy * (
        (1.0 - fx) * s[y1, x0] + fx * s[y1, x1]
    )
    out = np.floor(v + 0.5).astype(np.uint8)
    out[~inside] = fill
    return out


def rasterize_boxes(bits, boxes):
    """Set bits whose pixel centre (j+0.5, i+0.5) lies inside any box.

    Boxes are half-open: a centre c is covered if min <= c < max.
    """
    h, w = bits.shape
    for k in range(boxes.shape[0]):
        x0, y0, x1, y1 = boxes[k]
        j0 = max(int(np.ceil(x0 - 0.5)), 0)
        j1 = min(int(np.ceil(x1 - 0.5)), w)
        i0 = max(int(np.ceil(y0 - 0.5)), 0)
        i1 = min(int(np.ceil(y1 - 0.5)), h)
        if j1 > j0 and i1 > i0:
            bits[i0:i1, j0:j1] = 1
    return bits
