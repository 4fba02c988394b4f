"""Numba-compiled twins of the kernels in ``numpy_impl``.

Same signatures, same semantics; loop nests instead of vectorized
numpy so the interpolation and accumulation stay allocation-free.
Compiled objects are cached on disk, and ``parallel`` is left off so
results are reproducible and the pipeline honors single-threaded
runtime budgets.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _sample(img, x, y, w, h):
    xc = min(max(x, 0.0), w - 1.0)
    yc = min(max(y, 0.0), h - 1.0)
    x0 = int(np.floor(xc))
    y0 = int(np.floor(yc))
    if x0 > w - 2:
        x0 = w - 2
    if x0 < 0:
        x0 = 0
    if y0 > h - 2:
        y0 = h - 2
    if y0 < 0:
        y0 = 0
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    wx = xc - x0
    wy = yc - y0
    v00 = img[y0, x0]
    v01 = img[y0, x1]
    v10 = img[y1, x0]
    v11 = img[y1, x1]
    top = v00 + wx * (v01 - v00)
    bot = v10 + wx * (v11 - v10)
    return top + wy * (bot - top)


@njit(cache=True)
def bilinear_gather(img, xs, ys):
    h, w = img.shape
    n = xs.shape[0]
    vals = np.empty(n, dtype=np.float64)
    ddx = np.empty(n, dtype=np.float64)
    ddy = np.empty(n, dtype=np.float64)
    inb = np.empty(n, dtype=np.bool_)
    for i in range(n):
        x = xs[i]
        y = ys[i]
        inb[i] = (x >= 0.0) and (x <= w - 1.0) and (y >= 0.0) and (y <= h - 1.0)
        xc = min(max(x, 0.0), w - 1.0)
        yc = min(max(y, 0.0), h - 1.0)
        x0 = int(np.floor(xc))
        y0 = int(np.floor(yc))
        if x0 > w - 2:
            x0 = w - 2
        if x0 < 0:
            x0 = 0
        if y0 > h - 2:
            y0 = h - 2
        if y0 < 0:
            y0 = 0
        x1 = min(x0 + 1, w - 1)
        y1 = min(y0 + 1, h - 1)
        wx = xc - x0
        wy = yc - y0
        v00 = img[y0, x0]
        v01 = img[y0, x1]
        v10 = img[y1, x0]
        v11 = img[y1, x1]
        top = v00 + wx * (v01 - v00)
        bot = v10 + wx * (v11 - v10)
        vals[i] = top + wy * (bot - top)
        gx = 1.0 if (x > 0.0 and x < w - 1.0) else 0.0
        gy = 1.0 if (y > 0.0 and y < h - 1.0) else 0.0
        ddx[i] = ((1.0 - wy) * (v01 - v00) + wy * (v11 - v10)) * gx
        ddy[i] = (bot - top) * gy
    return vals, ddx, ddy, inb


@njit(cache=True)
def sweep_cost(desc_ref, desc_srcs, mats, vecs, depths, eps):
    h, w, f = desc_ref.shape
    v = desc_srcs.shape[0]
    k = depths.shape[0]
    cost = np.empty((k, h, w), dtype=np.float64)
    cnt = np.empty((k, h, w), dtype=np.uint8)
    acc = np.empty(f, dtype=np.float64)
    acc2 = np.empty(f, dtype=np.float64)
    val = np.empty(f, dtype=np.float64)
    for ki in range(k):
        d = depths[ki]
        for py in range(h):
            for px in range(w):
                for fi in range(f):
                    r = desc_ref[py, px, fi]
                    acc[fi] = r
                    acc2[fi] = r * r
                n = 1.0
                for j in range(v):
                    a = mats[j]
                    b = vecs[j]
                    qx = d * (a[0, 0] * px + a[0, 1] * py + a[0, 2]) + b[0]
                    qy = d * (a[1, 0] * px + a[1, 1] * py + a[1, 2]) + b[1]
                    qz = d * (a[2, 0] * px + a[2, 1] * py + a[2, 2]) + b[2]
                    if qz <= eps:
                        continue
                    u = qx / qz
                    vv = qy / qz
                    if u < 0.0 or u > w - 1.0 or vv < 0.0 or vv > h - 1.0:
                        continue
                    x0 = int(np.floor(u))
                    y0 = int(np.floor(vv))
                    if x0 > w - 2:
                        x0 = w - 2
                    if x0 < 0:
                        x0 = 0
                    if y0 > h - 2:
                        y0 = h - 2
                    if y0 < 0:
                        y0 = 0
                    x1 = min(x0 + 1, w - 1)
                    y1 = min(y0 + 1, h - 1)
                    wx = u - x0
                    wy = vv - y0
                    src = desc_srcs[j]
                    for fi in range(f):
                        v00 = src[y0, x0, fi]
                        v01 = src[y0, x1, fi]
                        v10 = src[y1, x0, fi]
                        v11 = src[y1, x1, fi]
                        val[fi] = (v00 + wx * (v01 - v00)) * (1.0 - wy) + (
                            v10 + wx * (v11 - v10)
                        ) * wy
                    for fi in range(f):
                        acc[fi] += val[fi]
                        acc2[fi] += val[fi] * val[fi]
                    n += 1.0
                c = 0.0
                for fi in range(f):
                    mean = acc[fi] / n
                    var = acc2[fi] / n - mean * mean
                    if var < 0.0:
                        var = 0.0
                    c += var
                cost[ki, py, px] = c / f if n >= 2.0 else 0.0
                cnt[ki, py, px] = np.uint8(n)
    return cost, cnt


@njit(cache=True)
def _box_sum_into(img, radius, out):
    # replicate-padded integral image, same accumulation order as the
    # numpy twin so both backends agree bitwise
    h, w = img.shape
    ph = h + 2 * radius
    pw = w + 2 * radius
    ii = np.zeros((ph + 1, pw + 1), dtype=np.float64)
    for i in range(ph):
        yy = min(max(i - radius, 0), h - 1)
        for j in range(pw):
            xx = min(max(j - radius, 0), w - 1)
            ii[i + 1, j + 1] = img[yy, xx]
    for j in range(1, pw + 1):
        for i in range(2, ph + 1):
            ii[i, j] += ii[i - 1, j]
    for i in range(1, ph + 1):
        for j in range(2, pw + 1):
            ii[i, j] += ii[i, j - 1]
    k = 2 * radius + 1
    for y in range(h):
        for x in range(w):
            out[y, x] = ii[y + k, x + k] - ii[y, x + k] - ii[y + k, x] + ii[y, x]


@njit(cache=True)
def block_match_ssd(a, b, init_u, init_v, disps, radius):
    h, w = a.shape
    s = disps.shape[0]
    gu = np.empty(h * w, dtype=np.float64)
    gv = np.empty(h * w, dtype=np.float64)
    gid = np.empty((h, w), dtype=np.int64)
    ng = 0
    for py in range(h):
        for px in range(w):
            u = init_u[py, px]
            v = init_v[py, px]
            found = -1
            for g in range(ng):
                if gu[g] == u and gv[g] == v:
                    found = g
                    break
            if found < 0:
                gu[ng] = u
                gv[ng] = v
                found = ng
                ng += 1
            gid[py, px] = found
    ssd = np.empty((s, h, w), dtype=np.float64)
    diff2 = np.empty((h, w), dtype=np.float64)
    box = np.empty((h, w), dtype=np.float64)
    for g in range(ng):
        for si in range(s):
            du = float(disps[si, 0]) + gu[g]
            dv = float(disps[si, 1]) + gv[g]
            for qy in range(h):
                for qx in range(w):
                    d = a[qy, qx] - _sample(b, qx + du, qy + dv, w, h)
                    diff2[qy, qx] = d * d
            _box_sum_into(diff2, radius, box)
            for qy in range(h):
                for qx in range(w):
                    if gid[qy, qx] == g:
                        ssd[si, qy, qx] = box[qy, qx]
    return ssd


@njit(cache=True)
def kd_query(pts, orig_idx, split_dim, split_val, left, right, lo, hi, queries):
    n = queries.shape[0]
    out_d2 = np.empty(n, dtype=np.float64)
    out_idx = np.empty(n, dtype=np.int64)
    stack = np.empty(64, dtype=np.int64)
    sdist = np.empty(64, dtype=np.float64)
    for qi in range(n):
        qx = queries[qi, 0]
        qy = queries[qi, 1]
        qz = queries[qi, 2]
        best = np.inf
        best_i = -1
        top = 0
        stack[0] = 0
        sdist[0] = 0.0
        while top >= 0:
            node = stack[top]
            mind = sdist[top]
            top -= 1
            if mind > best:
                continue
            while left[node] >= 0:
                dim = split_dim[node]
                if dim == 0:
                    qv = qx
                elif dim == 1:
                    qv = qy
                else:
                    qv = qz
                delta = qv - split_val[node]
                if delta < 0.0:
                    near = left[node]
                    far = right[node]
                else:
                    near = right[node]
                    far = left[node]
                fd = delta * delta
                if fd <= best:
                    top += 1
                    stack[top] = far
                    sdist[top] = fd
                node = near
            for i in range(lo[node], hi[node]):
                dx = qx - pts[i, 0]
                dy = qy - pts[i, 1]
                dz = qz - pts[i, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < best or (d2 == best and orig_idx[i] < best_i):
                    best = d2
                    best_i = orig_idx[i]
        out_d2[qi] = best
        out_idx[qi] = best_i
    return out_d2, out_idx
