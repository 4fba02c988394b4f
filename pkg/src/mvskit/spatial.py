"""Exact nearest-neighbor index over 3D points.

Median-split kd-tree stored as flat arrays so queries can run through
either kernel backend.  Distances are computed with the same
expression a brute-force scan would use and ties resolve toward the
smallest point index, so query results are exactly reproducible
against a linear scan.
"""

from __future__ import annotations

import numpy as np

from . import kernels

_LEAF_SIZE = 16


class KDTree:
    """Immutable spatial index; safe to query concurrently after build."""

    def __init__(self, points: np.ndarray, leaf_size: int = _LEAF_SIZE):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must be (N, 3)")
        if len(pts) == 0:
            raise ValueError("cannot index an empty point set")
        self._orig = pts
        n = len(pts)
        order = np.arange(n, dtype=np.int64)
        cap = 2 * (n // max(leaf_size // 2, 1) + 2)
        self._dim = np.zeros(cap, dtype=np.int64)
        self._val = np.zeros(cap, dtype=np.float64)
        self._left = np.full(cap, -1, dtype=np.int64)
        self._right = np.full(cap, -1, dtype=np.int64)
        self._lo = np.zeros(cap, dtype=np.int64)
        self._hi = np.zeros(cap, dtype=np.int64)
        self._count = 0
        self._leaf_size = max(leaf_size, 1)
        self._build(pts, order, 0, n)
        self._pts = pts[order]
        self._idx = order
        used = self._count
        for name in ("_dim", "_val", "_left", "_right", "_lo", "_hi"):
            setattr(self, name, getattr(self, name)[:used])

    def _new_node(self) -> int:
        i = self._count
        self._count += 1
        if i >= len(self._dim):
            for name in ("_dim", "_val", "_left", "_right", "_lo", "_hi"):
                arr = getattr(self, name)
                setattr(self, name, np.concatenate([arr, arr]))
            self._left[i:] = -1
            self._right[i:] = -1
        return i

    def _build(self, pts, order, lo, hi) -> int:
        node = self._new_node()
        if hi - lo <= self._leaf_size:
            self._lo[node] = lo
            self._hi[node] = hi
            self._left[node] = -1
            return node
        seg = pts[order[lo:hi]]
        spans = seg.max(axis=0) - seg.min(axis=0)
        dim = int(np.argmax(spans))
        mid = (hi - lo) // 2
        part = np.argpartition(seg[:, dim], mid)
        order[lo:hi] = order[lo:hi][part]
        split = pts[order[lo + mid], dim]
        self._dim[node] = dim
        self._val[node] = split
        left = self._build(pts, order, lo, lo + mid)
        right = self._build(pts, order, lo + mid, hi)
        self._left[node] = left
        self._right[node] = right
        return node

    def query(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest neighbor of each query point: ``(distances, indices)``."""
        q = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
        d2, idx = kernels.kd_query(
            self._pts,
            self._idx,
            self._dim,
            self._val,
            self._left,
            self._right,
            self._lo,
            self._hi,
            q,
        )
        return np.sqrt(d2), idx


def brute_force_nn(points: np.ndarray, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Linear-scan nearest neighbors, the oracle the tree must match exactly."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    dists = np.empty(len(queries))
    idxs = np.empty(len(queries), dtype=np.int64)
    for i, q in enumerate(queries):
        delta = points - q
        d2 = delta[:, 0] ** 2 + delta[:, 1] ** 2 + delta[:, 2] ** 2
        j = int(np.argmin(d2))
        idxs[i] = j
        dists[i] = np.sqrt(d2[j])
    return dists, idxs
