"""Backend parity: the compiled kernels and the NumPy fallback must return
bit-identical results on every operation."""
import numpy as np
import pytest

from platekit import kernels
from platekit.kernels import _fallback

native = pytest.importorskip(
    "platekit.kernels._native", reason="compiled extension not built"
)


def random_boxes(rng, n, extent=200.0):
    x0 = rng.uniform(0, extent - 2, size=n)
    y0 = rng.uniform(0, extent - 2, size=n)
    w = rng.uniform(1, extent / 2, size=n)
    h = rng.uniform(1, extent / 2, size=n)
    return np.stack([x0, y0, x0 + w, y0 + h], axis=1)


def test_backend_selected():
    assert kernels.BACKEND in ("native", "fallback")


def test_levenshtein_parity():
    rng = np.random.default_rng(1)
    for _ in range(300):
        a = rng.integers(0, 6, size=rng.integers(0, 30)).astype(np.uint32)
        b = rng.integers(0, 6, size=rng.integers(0, 30)).astype(np.uint32)
        assert native.levenshtein_u32(a, b) == _fallback.levenshtein_u32(a, b)


def test_iou_matrix_parity():
    rng = np.random.default_rng(2)
    a = random_boxes(rng, 40)
    b = random_boxes(rng, 50)
    out_native = np.asarray(native.iou_matrix(a, b))
    out_fallback = _fallback.iou_matrix(a, b)
    assert np.array_equal(out_native, out_fallback)


def test_warp_parity():
    rng = np.random.default_rng(3)
    for _ in range(10):
        src = rng.integers(0, 256, size=(37, 53, 3), dtype=np.uint8)
        theta = rng.uniform(-0.3, 0.3)
        inv = np.array([
            np.cos(theta) * rng.uniform(0.5, 1.8), np.sin(theta), rng.uniform(-5, 5),
            -np.sin(theta), np.cos(theta) * rng.uniform(0.5, 1.8), rng.uniform(-5, 5),
        ])
        out_native = np.asarray(native.warp_affine_u8(src, inv, 41, 47, 114))
        out_fallback = _fallback.warp_affine_u8(src, inv, 41, 47, 114)
        assert np.array_equal(out_native, out_fallback)


def test_rasterize_parity():
    rng = np.random.default_rng(4)
    boxes = random_boxes(rng, 12, extent=64.0)
    bits_native = np.zeros((64, 64), dtype=np.uint8)
    native.rasterize_boxes(bits_native, boxes)
    bits_fallback = _fallback.rasterize_boxes(np.zeros((64, 64), dtype=np.uint8), boxes)
    assert np.array_equal(bits_native, bits_fallback)


def test_wrapper_handles_empty():
    assert kernels.iou_matrix(np.zeros((0, 4)), np.zeros((3, 4))).shape == (0, 3)
    assert kernels.levenshtein_u32(np.array([], np.uint32), np.array([], np.uint32)) == 0
    assert kernels.rasterize_boxes(4, 4, np.zeros((0, 4))).sum() == 0
