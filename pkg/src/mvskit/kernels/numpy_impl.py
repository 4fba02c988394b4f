"""Pure-numpy reference implementations of the hot kernels.

These are the semantic reference; ``numba_impl`` mirrors them loop for
loop.  Conventions shared by both backends:

* images / rasters are row-major ``(H, W[, F])`` float64, top-left origin,
  pixel centers at integer coordinates;
* sampling coordinates are clamped to the image rectangle, so values are
  continuous everywhere and constant outside; the in-bounds flag reports
  whether the *unclamped* coordinate was inside ``[0, W-1] x [0, H-1]``.
"""

from __future__ import annotations

import numpy as np


def _clamped_corners(xs, ys, w, h):
    xc = np.clip(xs, 0.0, w - 1.0)
    yc = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xc), w - 2).astype(np.int64)
    y0 = np.minimum(np.floor(yc), h - 2).astype(np.int64)
    np.maximum(x0, 0, out=x0)
    np.maximum(y0, 0, out=y0)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    return xc - x0, yc - y0, x0, y0, x1, y1


def bilinear_gather(img, xs, ys):
    """Sample ``img`` at continuous coords.

    Returns ``(vals, ddx, ddy, inb)``: interpolated values, partial
    derivatives of the interpolant w.r.t. x and y (zero where the
    coordinate is clamped), and the in-bounds flags.
    """
    h, w = img.shape
    inb = (xs >= 0.0) & (xs <= w - 1.0) & (ys >= 0.0) & (ys <= h - 1.0)
    wx, wy, x0, y0, x1, y1 = _clamped_corners(xs, ys, w, h)
    v00 = img[y0, x0]
    v01 = img[y0, x1]
    v10 = img[y1, x0]
    v11 = img[y1, x1]
    top = v00 + wx * (v01 - v00)
    bot = v10 + wx * (v11 - v10)
    vals = top + wy * (bot - top)
    gx = (xs > 0.0) & (xs < w - 1.0)
    gy = (ys > 0.0) & (ys < h - 1.0)
    ddx = ((1.0 - wy) * (v01 - v00) + wy * (v11 - v10)) * gx
    ddy = (bot - top) * gy
    return vals, ddx, ddy, inb


def sweep_cost(desc_ref, desc_srcs, mats, vecs, depths, eps):
    """Per-hypothesis matching cost for a fronto-parallel plane sweep.

    For each hypothesis depth the source descriptor maps are warped into
    the reference view and the cost is the mean (over descriptor
    channels) population variance across the contributing views.  The
    reference descriptors always contribute; a source contributes where
    its warped depth exceeds ``eps`` and the coordinate is in bounds.

    Returns ``(cost, cnt)`` of shapes ``(K, H, W)`` with ``cnt`` the
    per-entry number of contributing views.
    """
    h, w, f = desc_ref.shape
    v = desc_srcs.shape[0]
    k = depths.shape[0]
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    xs = xs.ravel()
    ys = ys.ravel()
    cost = np.empty((k, h, w), dtype=np.float64)
    cnt = np.empty((k, h, w), dtype=np.uint8)
    ref_flat = desc_ref.reshape(-1, f)
    for ki in range(k):
        d = depths[ki]
        acc = ref_flat.copy()
        acc2 = ref_flat * ref_flat
        n = np.ones(h * w, dtype=np.float64)
        for j in range(v):
            a, b = mats[j], vecs[j]
            qx = d * (a[0, 0] * xs + a[0, 1] * ys + a[0, 2]) + b[0]
            qy = d * (a[1, 0] * xs + a[1, 1] * ys + a[1, 2]) + b[1]
            qz = d * (a[2, 0] * xs + a[2, 1] * ys + a[2, 2]) + b[2]
            front = qz > eps
            zsafe = np.where(front, qz, 1.0)
            u = qx / zsafe
            vv = qy / zsafe
            inb = front & (u >= 0.0) & (u <= w - 1.0) & (vv >= 0.0) & (vv <= h - 1.0)
            wx, wy, x0, y0, x1, y1 = _clamped_corners(u, vv, w, h)
            v00 = desc_srcs[j][y0, x0]
            v01 = desc_srcs[j][y0, x1]
            v10 = desc_srcs[j][y1, x0]
            v11 = desc_srcs[j][y1, x1]
            wx = wx[:, None]
            wy = wy[:, None]
            vals = (v00 + wx * (v01 - v00)) * (1.0 - wy) + (v10 + wx * (v11 - v10)) * wy
            m = inb.astype(np.float64)
            acc += vals * m[:, None]
            acc2 += vals * vals * m[:, None]
            n += m
        mean = acc / n[:, None]
        var = acc2 / n[:, None] - mean * mean
        np.maximum(var, 0.0, out=var)
        c = var.mean(axis=1)
        c[n < 2.0] = 0.0
        cost[ki] = c.reshape(h, w)
        cnt[ki] = n.astype(np.uint8).reshape(h, w)
    return cost, cnt


def block_match_ssd(a, b, init_u, init_v, disps, radius):
    """Window SSD stack for block matching.

    ``disps`` is the ordered list of integer candidate displacements.
    Candidate ``s`` compares, around every pixel ``p``, the window of
    ``a`` against the window of ``b`` displaced rigidly by
    ``init(p) + disps[s]`` -- the initialization is read at the window
    center, so patches never mix neighboring estimates.  Out-of-range
    samples clamp to the image edge; window size is ``2 * radius + 1``.
    ``init_u``/``init_v`` must be integer-valued fields.
    """
    h, w = a.shape
    s = disps.shape[0]
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    ssd = np.empty((s, h, w), dtype=np.float64)
    # pixels sharing an initialization share the whole warped SSD plane
    keys = np.stack([init_u.ravel(), init_v.ravel()], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(h, w)
    for gi, (gu, gv) in enumerate(uniq):
        sel = inverse == gi
        for si in range(s):
            du, dv = float(disps[si, 0]) + gu, float(disps[si, 1]) + gv
            vals, _, _, _ = bilinear_gather(b, (xs + du).ravel(), (ys + dv).ravel())
            diff2 = (a - vals.reshape(h, w)) ** 2
            ssd[si][sel] = _box_sum(diff2, radius)[sel]
    return ssd


def _box_sum(img, radius):
    pad = np.pad(img, radius, mode="edge")
    ii = np.zeros((pad.shape[0] + 1, pad.shape[1] + 1), dtype=np.float64)
    np.cumsum(pad, axis=0, out=ii[1:, 1:])
    np.cumsum(ii[1:, 1:], axis=1, out=ii[1:, 1:])
    k = 2 * radius + 1
    return ii[k:, k:] - ii[:-k, k:] - ii[k:, :-k] + ii[:-k, :-k]


def kd_query(pts, orig_idx, split_dim, split_val, left, right, lo, hi, queries):
    """Exact nearest-neighbor queries against a flattened kd-tree.

    Ties on squared distance are broken toward the smallest original
    point index, so results are independent of traversal order.
    Returns ``(d2, idx)``.
    """
    n = queries.shape[0]
    out_d2 = np.empty(n, dtype=np.float64)
    out_idx = np.empty(n, dtype=np.int64)
    stack = np.empty(64, dtype=np.int64)
    sdist = np.empty(64, dtype=np.float64)
    for qi in range(n):
        qx, qy, qz = queries[qi, 0], queries[qi, 1], queries[qi, 2]
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
                qv = qx if dim == 0 else (qy if dim == 1 else qz)
                delta = qv - split_val[node]
                if delta < 0.0:
                    near, far = left[node], right[node]
                else:
                    near, far = right[node], left[node]
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
