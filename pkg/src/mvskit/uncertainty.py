"""Ensemble statistics, certainty masking and sparsification analysis.

The predictive uncertainty of a stack of sampled depth maps is the
population variance of the samples plus the mean of their per-sample
variance proxies, computed in a numerically stable two-pass form
(mean first, then centered moments).  A pixel counts as certain when
``exp(-U)`` clears a threshold, evaluated as ``U < -ln(threshold)`` so
the boundary case is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import DepthMap

DEFAULT_CERTAINTY_THRESHOLD = 0.3
DEFAULT_SAMPLE_COUNT = 20


@dataclass
class EnsembleStack:
    """Sampled depth maps with matching per-sample variance proxies.

    ``depths`` and ``sigma2`` are ``(T, H, W)``; ``valid`` is the common
    validity mask (a pixel is usable only if every sample produced it).
    """

    depths: np.ndarray
    sigma2: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.depths = np.asarray(self.depths, dtype=np.float64)
        self.sigma2 = np.asarray(self.sigma2, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.depths.ndim != 3 or self.depths.shape[0] < 2:
            raise ValueError("need a (T, H, W) stack with T >= 2")
        if self.sigma2.shape != self.depths.shape:
            raise ValueError("sigma2 shape must match depths")
        if self.valid.shape != self.depths.shape[1:]:
            raise ValueError("valid shape must match one sample")

    @property
    def count(self) -> int:
        return self.depths.shape[0]


def ensemble_stats(stack: EnsembleStack) -> tuple[DepthMap, np.ndarray]:
    """Pseudo-label mean and predictive uncertainty of the stack.

    Returns ``(mean_depth, uncertainty)`` where the uncertainty is the
    per-pixel sample variance plus the mean variance proxy, clamped at
    zero to absorb rounding.
    """
    mean = stack.depths.mean(axis=0)
    centered = stack.depths - mean
    var = np.mean(centered * centered, axis=0)
    u = var + stack.sigma2.mean(axis=0)
    np.maximum(u, 0.0, out=u)
    safe = np.where(stack.valid, mean, 1.0)
    return DepthMap(safe, stack.valid & (safe > 0)), u


def certainty_mask(
    uncertainty: np.ndarray, threshold: float = DEFAULT_CERTAINTY_THRESHOLD
) -> np.ndarray:
    """Pixels whose confidence ``exp(-U)`` strictly exceeds ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    return np.asarray(uncertainty, dtype=np.float64) < -np.log(threshold)


@dataclass
class SparsificationCurve:
    """Error of the most-confident pixel fraction as the fraction grows."""

    density: np.ndarray
    error: np.ndarray
    oracle_error: np.ndarray
    area: float

    def rows(self):
        return list(zip(self.density, self.error))


def sparsification_curve(
    confidence: np.ndarray,
    error: np.ndarray,
    mask: np.ndarray,
    bins: int = 20,
) -> SparsificationCurve:
    """Rank pixels by decreasing confidence and trace top-fraction error.

    Point ``k`` of the curve is the mean absolute error of the most
    confident ``k / bins`` fraction (ties broken by pixel index).  The
    oracle curve ranks by increasing error instead, and ``area`` is the
    trapezoid integral of the curve above the oracle.
    """
    if bins < 2:
        raise ValueError("bins must be at least 2")
    mask = np.asarray(mask, dtype=bool)
    conf = np.asarray(confidence, dtype=np.float64).ravel()[mask.ravel()]
    errs = np.abs(np.asarray(error, dtype=np.float64).ravel()[mask.ravel()])
    n = conf.size
    if n == 0:
        raise ValueError("empty mask")
    idx = np.arange(n)
    order = np.lexsort((idx, -conf))
    oracle_order = np.lexsort((idx, errs))
    sizes = np.ceil(np.arange(1, bins + 1) * n / bins).astype(np.int64)
    np.minimum(sizes, n, out=sizes)
    curve = np.cumsum(errs[order])[sizes - 1] / sizes
    oracle = np.cumsum(errs[oracle_order])[sizes - 1] / sizes
    density = sizes / n
    area = float(np.trapezoid(curve - oracle, density))
    return SparsificationCurve(density, curve, oracle, area)
