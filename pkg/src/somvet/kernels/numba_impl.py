"""Numba-jitted hot kernels. Same contracts as numpy_impl."""

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def conv2d_valid(xp, w, b):
    n, ci, hp, wp = xp.shape
    co, _, k, _ = w.shape
    oh = hp - k + 1
    ow = wp - k + 1
    y = np.empty((n, co, oh, ow), dtype=xp.dtype)
    for s in prange(n):
        for oc in range(co):
            for oy in range(oh):
                for ox in range(ow):
                    acc = b[oc]
                    for ic in range(ci):
                        for ky in range(k):
                            for kx in range(k):
                                acc += w[oc, ic, ky, kx] * xp[s, ic, oy + ky, ox + kx]
                    y[s, oc, oy, ox] = acc
    return y


@njit(parallel=True, cache=True)
def conv2d_valid_grad_x(w, gy, hp, wp):
    n, co, oh, ow = gy.shape
    ci = w.shape[1]
    k = w.shape[2]
    gx = np.zeros((n, ci, hp, wp), dtype=gy.dtype)
    for s in prange(n):
        for oc in range(co):
            for oy in range(oh):
                for ox in range(ow):
                    g = gy[s, oc, oy, ox]
                    for ic in range(ci):
                        for ky in range(k):
                            for kx in range(k):
                                gx[s, ic, oy + ky, ox + kx] += w[oc, ic, ky, kx] * g
    return gx


@njit(parallel=True, cache=True)
def conv2d_valid_grad_w(xp, gy, k):
    n, ci, hp, wp = xp.shape
    co, oh, ow = gy.shape[1], gy.shape[2], gy.shape[3]
    gw = np.zeros((co, ci, k, k), dtype=gy.dtype)
    gb = np.zeros(co, dtype=gy.dtype)
    for oc in prange(co):
        for s in range(n):
            for oy in range(oh):
                for ox in range(ow):
                    g = gy[s, oc, oy, ox]
                    gb[oc] += g
                    for ic in range(ci):
                        for ky in range(k):
                            for kx in range(k):
                                gw[oc, ic, ky, kx] += g * xp[s, ic, oy + ky, ox + kx]
    return gw, gb


@njit(parallel=True, cache=True)
def maxpool2d_forward(x, s):
    n, c, h, w = x.shape
    oh = h // s
    ow = w // s
    y = np.empty((n, c, oh, ow), dtype=x.dtype)
    arg = np.empty((n, c, oh, ow), dtype=np.int64)
    for i in prange(n):
        for ch in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    by = oy * s
                    bx = ox * s
                    best = x[i, ch, by, bx]
                    bidx = by * w + bx
                    for dy in range(s):
                        for dx in range(s):
                            v = x[i, ch, by + dy, bx + dx]
                            if v > best:
                                best = v
                                bidx = (by + dy) * w + (bx + dx)
                    y[i, ch, oy, ox] = best
                    arg[i, ch, oy, ox] = bidx
    return y, arg


@njit(parallel=True, cache=True)
def maxpool2d_backward(gy, arg, h, w):
    n, c, oh, ow = gy.shape
    gx = np.zeros((n, c, h, w), dtype=gy.dtype)
    for i in prange(n):
        for ch in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    f = arg[i, ch, oy, ox]
                    gx[i, ch, f // w, f % w] += gy[i, ch, oy, ox]
    return gx


@njit(parallel=True, cache=True)
def bmu_batch(z, wflat):
    n, d = z.shape
    M = wflat.shape[0]
    idx = np.empty(n, dtype=np.int64)
    d2 = np.empty(n, dtype=z.dtype)
    for i in prange(n):
        best = np.inf
        bk = 0
        for m in range(M):
            acc = 0.0
            for j in range(d):
                diff = z[i, j] - wflat[m, j]
                acc += diff * diff
            if acc < best:
                best = acc
                bk = m
        idx[i] = bk
        d2[i] = best
    return idx, d2


@njit(cache=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit(cache=True)
def _union(parent, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra < rb:
        parent[rb] = ra
    elif rb < ra:
        parent[ra] = rb


@njit(cache=True)
def label_components(mask):
    # union by smaller index, so each root is the component's first
    # row-major pixel (matches the propagation backend exactly)
    h, w = mask.shape
    parent = np.arange(h * w, dtype=np.int64)
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            i = y * w + x
            if x > 0 and mask[y, x - 1]:
                _union(parent, i, i - 1)
            if y > 0:
                if mask[y - 1, x]:
                    _union(parent, i, i - w)
                if x > 0 and mask[y - 1, x - 1]:
                    _union(parent, i, i - w - 1)
                if x < w - 1 and mask[y - 1, x + 1]:
                    _union(parent, i, i - w + 1)
    lab = np.full((h, w), -1, dtype=np.int64)
    for y in range(h):
        for x in range(w):
            if mask[y, x]:
                lab[y, x] = _find(parent, y * w + x)
    return lab
