"""Pure-numpy reference implementations of the hot kernels.

These define the semantics the numba backend must match: output shapes,
dtypes, and tie-breaking (first occurrence in row-major scan order).
"""

import numpy as np


def conv2d_valid(xp, w, b):
    """Valid cross-correlation of a pre-padded batch.

    xp: (n, ci, hp, wp), w: (co, ci, k, k), b: (co,) -> (n, co, hp-k+1, wp-k+1)
    """
    n, ci, hp, wp = xp.shape
    co, _, k, _ = w.shape
    oh, ow = hp - k + 1, wp - k + 1
    y = np.zeros((n, co, oh, ow), dtype=xp.dtype)
    for ky in range(k):
        for kx in range(k):
            patch = xp[:, :, ky:ky + oh, kx:kx + ow]
            # (co, ci) x (n, ci, oh, ow) -> (co, n, oh, ow)
            y += np.tensordot(w[:, :, ky, kx], patch, axes=([1], [1])).transpose(1, 0, 2, 3)
    return y + b[None, :, None, None]


def conv2d_valid_grad_x(w, gy, hp, wp):
    """Gradient w.r.t. the padded input. gy: (n, co, oh, ow) -> (n, ci, hp, wp)."""
    n, co, oh, ow = gy.shape
    _, ci, k, _ = w.shape
    gx = np.zeros((n, ci, hp, wp), dtype=gy.dtype)
    for ky in range(k):
        for kx in range(k):
            # (n, oh, ow, ci) from (n, co, oh, ow) x (co, ci)
            g = np.tensordot(gy, w[:, :, ky, kx], axes=([1], [0]))
            gx[:, :, ky:ky + oh, kx:kx + ow] += g.transpose(0, 3, 1, 2)
    return gx


def conv2d_valid_grad_w(xp, gy, k):
    """Gradients w.r.t. weights and bias. Returns (gw, gb)."""
    ci = xp.shape[1]
    co, oh, ow = gy.shape[1], gy.shape[2], gy.shape[3]
    gw = np.zeros((co, ci, k, k), dtype=gy.dtype)
    for ky in range(k):
        for kx in range(k):
            patch = xp[:, :, ky:ky + oh, kx:kx + ow]
            gw[:, :, ky, kx] = np.tensordot(gy, patch, axes=([0, 2, 3], [0, 2, 3]))
    gb = gy.sum(axis=(0, 2, 3))
    return gw, gb


def maxpool2d_forward(x, s):
    """Non-overlapping s-by-s max pooling.

    Returns (y, arg) where arg holds, per output cell, the flat h*w index of
    the maximum (first occurrence in row-major window order).
    """
    n, c, h, w = x.shape
    oh, ow = h // s, w // s
    win = x.reshape(n, c, oh, s, ow, s).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, s * s)
    k = win.argmax(axis=-1)
    y = np.take_along_axis(win, k[..., None], axis=-1)[..., 0]
    oy = np.arange(oh)[:, None] * s
    ox = np.arange(ow)[None, :] * s
    arg = (oy[None, None] + k // s) * w + (ox[None, None] + k % s)
    return y, arg.astype(np.int64)


def maxpool2d_backward(gy, arg, h, w):
    """Scatter pooled gradients back to input positions."""
    n, c, oh, ow = gy.shape
    gx = np.zeros((n, c, h * w), dtype=gy.dtype)
    np.put_along_axis(gx, arg.reshape(n, c, -1), gy.reshape(n, c, -1), axis=2)
    return gx.reshape(n, c, h, w)


def bmu_batch(z, wflat, chunk=None):
    """Best matching unit per row of z against flat cell weights.

    z: (n, d), wflat: (M, d). Returns (idx, d2) with idx the row-major index
    of the nearest cell (first index wins ties) and d2 the squared distance.
    """
    n, d = z.shape
    M = wflat.shape[0]
    if chunk is None:
        chunk = max(1, int(8e6 / max(1, M)))
    idx = np.empty(n, dtype=np.int64)
    d2 = np.empty(n, dtype=z.dtype)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        # accumulate dim by dim: same rounding sequence as a scalar loop
        dist = np.zeros((hi - lo, M), dtype=z.dtype)
        for j in range(d):
            diff = z[lo:hi, j:j + 1] - wflat[None, :, j]
            dist += diff * diff
        k = dist.argmin(axis=1)
        idx[lo:hi] = k
        d2[lo:hi] = dist[np.arange(hi - lo), k]
    return idx, d2


def label_components(mask):
    """8-connected component labels by iterative min-index propagation.

    Returns an int64 array where background is -1 and every foreground pixel
    carries the smallest flat index of its component (its first row-major
    pixel), matching the union-find backend exactly.
    """
    h, w = mask.shape
    sent = np.int64(h * w)
    lab = np.where(mask, np.arange(h * w, dtype=np.int64).reshape(h, w), sent)
    padded = np.full((h + 2, w + 2), sent, dtype=np.int64)
    while True:
        padded[1:-1, 1:-1] = lab
        best = lab.copy()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                np.minimum(best, padded[1 + dy:h + 1 + dy, 1 + dx:w + 1 + dx], out=best)
        best = np.where(mask, best, sent)
        if np.array_equal(best, lab):
            break
        lab = best
    return np.where(mask, lab, np.int64(-1))
