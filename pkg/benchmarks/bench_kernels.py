"""Compare the numba and numpy kernel backends on pipeline-sized inputs.

Run: python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from somvet.kernels import numpy_impl

try:
    from somvet.kernels import numba_impl
except ImportError:
    numba_impl = None


def bench(func, *args, repeat=3, warmup=True):
    if warmup:
        func(*args)
    t0 = time.perf_counter()
    for _ in range(repeat):
        func(*args)
    return (time.perf_counter() - t0) / repeat


def cases():
    rng = np.random.default_rng(0)
    xp = rng.standard_normal((64, 8, 34, 34)).astype(np.float32)
    w = rng.standard_normal((8, 8, 3, 3)).astype(np.float32)
    b = rng.standard_normal(8).astype(np.float32)
    gy = rng.standard_normal((64, 8, 32, 32)).astype(np.float32)
    yield "conv2d forward (64x8x32x32, k3)", "conv2d_valid", (xp, w, b)
    yield "conv2d grad_x", "conv2d_valid_grad_x", (w, gy, 34, 34)
    yield "conv2d grad_w", "conv2d_valid_grad_w", (xp, gy, 3)

    x = rng.standard_normal((256, 8, 32, 32)).astype(np.float32)
    yield "maxpool2d forward (256x8x32x32)", "maxpool2d_forward", (x, 2)

    z_small = rng.standard_normal((20000, 16)).astype(np.float32)
    w_small = rng.standard_normal((64, 16)).astype(np.float32)
    yield "bmu 20k latents vs 8x8 map", "bmu_batch", (z_small, w_small)
    z_big = rng.standard_normal((2000, 120)).astype(np.float32)
    w_big = rng.standard_normal((900, 120)).astype(np.float32)
    yield "bmu 2k latents vs 30x30 map", "bmu_batch", (z_big, w_big)

    mask = rng.random((512, 512)) < 0.3
    yield "label components (512x512)", "label_components", (mask,)


def main():
    if numba_impl is None:
        print("numba unavailable: only timing the numpy backend")
    print(f"{'kernel':<38} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, fn, args in cases():
        t_np = bench(getattr(numpy_impl, fn), *args)
        if numba_impl is None:
            print(f"{name:<38} {t_np*1e3:>8.2f}ms {'-':>10} {'-':>8}")
            continue
        t_nb = bench(getattr(numba_impl, fn), *args)
        print(f"{name:<38} {t_np*1e3:>8.2f}ms {t_nb*1e3:>8.2f}ms {t_np/t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
