"""Compare the compiled kernels against the NumPy fallback on realistic
workloads.

    python benchmarks/bench_kernels.py [--repeat N]

Both backends are imported directly (no env juggling), run the identical
inputs, and are checked for bit-identical outputs before timing.
"""
import argparse
import time

import numpy as np

from platekit.kernels import _fallback

try:
    from platekit.kernels import _native
except ImportError:
    _native = None


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_levenshtein(backend):
    rng = np.random.default_rng(0)
    pairs = [
        (rng.integers(0, 80, size=200).astype(np.uint32),
         rng.integers(0, 80, size=220).astype(np.uint32))
        for _ in range(50)
    ]
    return lambda: [backend.levenshtein_u32(a, b) for a, b in pairs]


def bench_iou(backend):
    rng = np.random.default_rng(1)
    x0 = rng.uniform(0, 500, size=(400, 1))
    boxes = np.concatenate([x0, x0, x0 + 50, x0 + 50], axis=1)
    a = np.ascontiguousarray(boxes)
    b = np.ascontiguousarray(boxes[::-1])
    return lambda: backend.iou_matrix(a, b)


def bench_warp(backend):
    rng = np.random.default_rng(2)
    src = rng.integers(0, 256, size=(480, 640, 3), dtype=np.uint8)
    theta = 0.14
    inv = np.array([np.cos(theta), np.sin(theta), -40.0,
                    -np.sin(theta), np.cos(theta), 25.0])
    return lambda: backend.warp_affine_u8(src, inv, 480, 640, 114)


def bench_rasterize(backend):
    rng = np.random.default_rng(3)
    x0 = rng.uniform(0, 800, size=(64, 1))
    boxes = np.ascontiguousarray(
        np.concatenate([x0, x0 * 0.7, x0 + 120, x0 * 0.7 + 90], axis=1))

    def run():
        bits = np.zeros((1080, 1920), dtype=np.uint8)
        backend.rasterize_boxes(bits, boxes)
        return bits

    return run


BENCHES = {
    "levenshtein (50 pairs, len ~200)": bench_levenshtein,
    "iou_matrix (400x400 boxes)": bench_iou,
    "warp_affine (640x480 RGB)": bench_warp,
    "rasterize (1920x1080, 64 boxes)": bench_rasterize,
}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if _native is None:
        print("compiled extension not built; run `python setup.py build_ext --inplace`")
        return

    print(f"{'kernel':36}  {'native':>10}  {'fallback':>10}  {'speedup':>8}")
    print("-" * 72)
    for name, make in BENCHES.items():
        native_fn = make(_native)
        fallback_fn = make(_fallback)
        n_out = np.asarray(native_fn())
        f_out = np.asarray(fallback_fn())
        assert np.array_equal(n_out, f_out), f"{name}: backends disagree"
        t_native = timeit(native_fn, args.repeat)
        t_fallback = timeit(fallback_fn, args.repeat)
        print(f"{name:36}  {t_native * 1e3:8.2f}ms  {t_fallback * 1e3:8.2f}ms"
              f"  {t_fallback / t_native:7.1f}x")


if __name__ == "__main__":
    main()
