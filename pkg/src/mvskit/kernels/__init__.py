"""Backend dispatch for the numeric hot loops.

Two interchangeable implementations live side by side:

* ``numba_impl`` -- ``@njit``-compiled loops (default when numba imports).
* ``numpy_impl`` -- pure vectorized numpy, used as fallback.

The active backend is picked once at import time from the environment
variable ``MVSKIT_BACKEND`` (``auto`` | ``numba`` | ``numpy``) and can be
switched at runtime with :func:`set_backend` (used by the benchmark and
the cross-backend tests).  Both backends implement the same functions
with identical semantics; see ``numpy_impl`` for the reference
definitions.
"""

from __future__ import annotations

import os

from . import numpy_impl

_impl = None
_name = "numpy"


def set_backend(name: str) -> None:
    """Select the kernel backend: 'numba', 'numpy' or 'auto'."""
    global _impl, _name
    if name == "numpy":
        _impl, _name = numpy_impl, "numpy"
        return
    if name in ("numba", "auto"):
        try:
            from . import numba_impl
        except ImportError:
            if name == "numba":
                raise
            _impl, _name = numpy_impl, "numpy"
            return
        _impl, _name = numba_impl, "numba"
        return
    raise ValueError(f"unknown kernel backend {name!r}")


def backend_name() -> str:
    return _name


def bilinear_gather(img, xs, ys):
    return _impl.bilinear_gather(img, xs, ys)


def sweep_cost(desc_ref, desc_srcs, mats, vecs, depths, eps):
    return _impl.sweep_cost(desc_ref, desc_srcs, mats, vecs, depths, eps)


def block_match_ssd(a, b, init_u, init_v, disps, radius):
    return _impl.block_match_ssd(a, b, init_u, init_v, disps, radius)


def kd_query(pts, orig_idx, split_dim, split_val, left, right, lo, hi, queries):
    return _impl.kd_query(
        pts, orig_idx, split_dim, split_val, left, right, lo, hi, queries
    )


set_backend(os.environ.get("MVSKIT_BACKEND", "auto").strip().lower() or "auto")
