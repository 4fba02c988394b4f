"""Deterministic plane-sweep matcher and block-matching flow.

Depth estimation sweeps fronto-parallel planes through the reference
camera's depth range, warps hand-crafted patch descriptors (per
channel: 5x5-mean-subtracted intensity plus forward gradients) from
every source view, and scores each hypothesis by the across-view
descriptor variance.  Raw variances are standardized per pixel
(min-shifted, scaled by their spread over the hypotheses) so the
softmin depth readout concentrates wherever the data is decisive and
stays flat where it is not; the distributional variance of that
readout doubles as the per-pixel noise proxy consumed by the
variance-weighted losses.

Ensembles emulate stochastic weight sampling by dropping a random
subset of hypotheses per sample and renormalizing the surviving
softmin support.  All sampling is driven by one seed through fixed
sub-seed derivation, so results do not depend on evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import BEHIND_EPS, Camera, DepthMap, image_gradient, relative_projection
from .uncertainty import EnsembleStack

DEFAULT_HYPOTHESIS_COUNT = 192
DEFAULT_TEMPERATURE = 0.1
DEFAULT_DROP_RATE = 0.2
_PATCH_RADIUS = 2
_INVALID_COST_GAP = 1e6
_COST_GAIN = 4.0


@dataclass
class CostVolume:
    """Standardized per-pixel-per-hypothesis matching cost.

    ``costs`` is ``(K, H, W)``, non-negative, zero at each pixel's best
    hypothesis; entries supported by fewer than two views carry a large
    finite penalty and ``counts`` records the support.  ``depths`` holds
    the strictly increasing hypothesis depths.
    """

    costs: np.ndarray
    counts: np.ndarray
    depths: np.ndarray

    def __post_init__(self):
        if not np.all(np.diff(self.depths) > 0):
            raise ValueError("hypothesis depths must be strictly increasing")
        if not np.isfinite(self.costs).all():
            raise ValueError("costs must be finite")

    @property
    def degenerate(self) -> np.ndarray:
        """Pixels with no hypothesis supported by at least two views."""
        return (self.counts < 2).all(axis=0)


@dataclass
class SamplerSpec:
    """Ensemble sampling parameters."""

    samples: int = 20
    drop_rate: float = DEFAULT_DROP_RATE
    seed: int = 0

    def __post_init__(self):
        if self.samples < 2:
            raise ValueError("need at least two samples")
        if not 0.0 <= self.drop_rate < 1.0:
            raise ValueError("drop_rate must be in [0, 1)")


def hypothesis_depths(
    depth_range: tuple[float, float], count: int, inverse: bool = False
) -> np.ndarray:
    """Uniformly spaced hypothesis depths, optionally in inverse depth."""
    lo, hi = depth_range
    if count < 2:
        raise ValueError("need at least two hypotheses")
    if not 0 < lo < hi:
        raise ValueError("invalid depth range")
    if inverse:
        return 1.0 / np.linspace(1.0 / lo, 1.0 / hi, count)
    return np.linspace(lo, hi, count)


def patch_descriptors(image: np.ndarray) -> np.ndarray:
    """Per-pixel matching descriptors: local-mean-subtracted intensity + gradients."""
    image = np.asarray(image, dtype=np.float64)
    chans = [image] if image.ndim == 2 else [image[..., c] for c in range(image.shape[2])]
    feats = []
    size = 2 * _PATCH_RADIUS + 1
    for ch in chans:
        mean = _box_mean(ch, _PATCH_RADIUS, size)
        gx, gy = image_gradient(ch)
        feats += [ch - mean, gx, gy]
    return np.stack(feats, axis=-1)


def _box_mean(img, radius, size):
    pad = np.pad(img, radius, mode="edge")
    ii = np.zeros((pad.shape[0] + 1, pad.shape[1] + 1))
    np.cumsum(pad, axis=0, out=ii[1:, 1:])
    np.cumsum(ii[1:, 1:], axis=1, out=ii[1:, 1:])
    s = ii[size:, size:] - ii[:-size, size:] - ii[size:, :-size] + ii[:-size, :-size]
    return s / (size * size)


def build_cost_volume(
    image_ref: np.ndarray,
    sources: list[tuple[np.ndarray, Camera]],
    cam_ref: Camera,
    hypotheses: int = DEFAULT_HYPOTHESIS_COUNT,
    inverse_spacing: bool = False,
    max_bytes: int = 2**31,
) -> CostVolume:
    """Sweep the reference depth range and score every hypothesis.

    Costs are the across-view population variance of the warped
    descriptors (reference included, invalid warps excluded with count
    tracking), standardized per pixel as described in the module
    docstring.
    """
    if not sources:
        raise ValueError("need at least one source view")
    if hypotheses < 2:
        raise ValueError("need at least two hypotheses")
    h, w = np.asarray(image_ref).shape[:2]
    required = hypotheses * h * w * (8 + 8 + 1)
    if required > max_bytes:
        raise MemoryError(
            f"cost volume needs {required} bytes, budget is {max_bytes}"
        )
    depths = hypothesis_depths(cam_ref.depth_range, hypotheses, inverse_spacing)
    desc_ref = patch_descriptors(image_ref)
    desc_srcs = np.stack([patch_descriptors(img) for img, _ in sources])
    mats = np.stack([relative_projection(cam_ref, cam)[0] for _, cam in sources])
    vecs = np.stack([relative_projection(cam_ref, cam)[1] for _, cam in sources])
    raw, counts = kernels.sweep_cost(desc_ref, desc_srcs, mats, vecs, depths, BEHIND_EPS)
    return CostVolume(_standardize(raw, counts), counts, depths)


def _standardize(raw, counts):
    """Per-pixel cost normalization: zero at the best hypothesis, fixed scale.

    Costs are shifted by the per-pixel minimum and divided by the mean
    deviation from it, then scaled by a fixed gain, standing in for the
    learned cost regularization of network matchers: without it a fixed
    softmin temperature cannot serve scenes whose raw variances differ
    in scale, and a mean-based spread stays robust to spiky profiles.
    Unsupported entries are pushed above every supported one by a large
    finite gap.
    """
    supported = counts >= 2
    any_sup = supported.any(axis=0)
    big = np.where(supported, raw, np.inf)
    lo = np.where(any_sup, np.min(big, axis=0), 0.0)
    centered = np.where(supported, raw - lo, 0.0)
    nsup = np.maximum(supported.sum(axis=0), 1)
    spread = centered.sum(axis=0) / nsup
    out = _COST_GAIN * centered / (spread + 1e-12)
    penalty = np.where(any_sup, out.max(axis=0) + _INVALID_COST_GAP, 0.0)
    return np.where(supported, out, np.where(any_sup, penalty, 0.0))


def soft_argmin_depth(
    volume: CostVolume,
    temperature: float = DEFAULT_TEMPERATURE,
    keep: np.ndarray | None = None,
) -> tuple[DepthMap, np.ndarray]:
    """Expected depth under softmin cost weights, plus its variance.

    ``keep`` optionally restricts each pixel's hypothesis support (the
    ensemble dropout surface); weights renormalize over the surviving
    entries and pixels losing every hypothesis come back invalid.
    Returns ``(depth, sigma2)`` with the distributional variance as the
    per-pixel noise proxy.
    """
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    logits = -volume.costs / temperature
    if keep is not None:
        logits = np.where(keep, logits, -np.inf)
    peak = logits.max(axis=0)
    alive = np.isfinite(peak)
    weights = np.exp(logits - np.where(alive, peak, 0.0))
    weights[:, ~alive] = 0.0
    total = weights.sum(axis=0)
    weights /= np.where(alive, total, 1.0)
    d = volume.depths[:, None, None]
    mean = np.sum(weights * d, axis=0)
    var = np.sum(weights * (d - mean) ** 2, axis=0)
    return DepthMap(np.where(alive, mean, 1.0), alive), np.where(alive, var, 0.0)


def mc_sample(
    image_ref: np.ndarray,
    sources: list[tuple[np.ndarray, Camera]],
    cam_ref: Camera,
    hypotheses: int = DEFAULT_HYPOTHESIS_COUNT,
    spec: SamplerSpec | None = None,
    temperature: float = DEFAULT_TEMPERATURE,
    volume: CostVolume | None = None,
) -> EnsembleStack:
    """Stochastic depth ensemble from randomized hypothesis dropout.

    The cost volume is built once; each sample drops hypotheses
    independently with ``spec.drop_rate`` using a sub-seed derived from
    ``spec.seed`` and the sample index, and reruns the softmin readout.
    Identical seeds give bit-identical stacks.
    """
    spec = spec or SamplerSpec()
    if volume is None:
        volume = build_cost_volume(image_ref, sources, cam_ref, hypotheses)
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.samples)
    depth_stack = np.empty((spec.samples,) + volume.costs.shape[1:])
    sigma_stack = np.empty_like(depth_stack)
    valid = np.ones(volume.costs.shape[1:], dtype=bool)
    for t in range(spec.samples):
        if spec.drop_rate > 0.0:
            rng = np.random.default_rng(seeds[t])
            keep = rng.random(volume.costs.shape) >= spec.drop_rate
        else:
            keep = None
        dm, s2 = soft_argmin_depth(volume, temperature, keep)
        depth_stack[t] = dm.values
        sigma_stack[t] = s2
        valid &= dm.valid
    return EnsembleStack(depth_stack, sigma_stack, valid)


def block_match_flow(
    image_a: np.ndarray,
    image_b: np.ndarray,
    max_disp: int = 4,
    levels: int = 3,
    window: int = 9,
) -> np.ndarray:
    """Coarse-to-fine integer block matching with sub-pixel refinement.

    At each pyramid level the flow estimate is upsampled and refined by
    an SSD search over integer displacements within ``max_disp``;
    candidates are scanned nearest-displacement-first so exact ties
    resolve toward zero motion.  The finest level adds quadratic
    sub-pixel interpolation along each axis.  Color images are matched
    on their channel mean.
    """
    a = _luminance(image_a)
    b = _luminance(image_b)
    if a.shape != b.shape:
        raise ValueError("images must share a shape")
    if levels < 1 or max_disp < 1 or window < 3 or window % 2 == 0:
        raise ValueError("bad pyramid or window configuration")
    pyr_a = _pyramid(a, levels)
    pyr_b = _pyramid(b, levels)
    levels = len(pyr_a)
    radius = window // 2
    disps, slot = _disp_table(max_disp)
    flow_u = np.zeros(pyr_a[-1].shape)
    flow_v = np.zeros(pyr_a[-1].shape)
    for level in range(levels - 1, -1, -1):
        la, lb = pyr_a[level], pyr_b[level]
        if flow_u.shape != la.shape:
            # smooth and round the upsampled estimate: the warped-image SSD
            # needs the initialization locally constant across each window
            flow_u = np.round(_box_mean(2.0 * _upsample(flow_u, la.shape), 2, 5))
            flow_v = np.round(_box_mean(2.0 * _upsample(flow_v, la.shape), 2, 5))
        ssd = kernels.block_match_ssd(la, lb, flow_u, flow_v, disps, radius)
        best = np.argmin(ssd, axis=0)
        du = disps[best, 0].astype(np.float64)
        dv = disps[best, 1].astype(np.float64)
        if level == 0:
            du += _subpixel(ssd, best, disps, slot, max_disp, axis=0)
            dv += _subpixel(ssd, best, disps, slot, max_disp, axis=1)
        flow_u = flow_u + du
        flow_v = flow_v + dv
    return np.stack([flow_u, flow_v], axis=-1)


def _luminance(img):
    img = np.asarray(img, dtype=np.float64)
    return img if img.ndim == 2 else img.mean(axis=-1)


def _pyramid(img, levels):
    out = [img]
    for _ in range(levels - 1):
        cur = out[-1]
        h, w = cur.shape
        # stop while the window still fits the level several times over
        if h < 48 or w < 48:
            break
        h2, w2 = h // 2 * 2, w // 2 * 2
        half = 0.25 * (
            cur[0:h2:2, 0:w2:2] + cur[1:h2:2, 0:w2:2] + cur[0:h2:2, 1:w2:2] + cur[1:h2:2, 1:w2:2]
        )
        out.append(half)
    return out


def _upsample(field, shape):
    h, w = shape
    ys = (np.arange(h) + 0.5) / 2.0 - 0.5
    xs = (np.arange(w) + 0.5) / 2.0 - 0.5
    yi = np.clip(np.round(ys).astype(np.int64), 0, field.shape[0] - 1)
    xi = np.clip(np.round(xs).astype(np.int64), 0, field.shape[1] - 1)
    return field[np.ix_(yi, xi)]


def _disp_table(max_disp):
    side = 2 * max_disp + 1
    cand = [(du, dv) for dv in range(-max_disp, max_disp + 1) for du in range(-max_disp, max_disp + 1)]
    cand.sort(key=lambda p: (p[0] * p[0] + p[1] * p[1], p[1], p[0]))
    disps = np.array(cand, dtype=np.int64)
    slot = np.full((side, side), -1, dtype=np.int64)
    for i, (du, dv) in enumerate(cand):
        slot[dv + max_disp, du + max_disp] = i
    return disps, slot


def _subpixel(ssd, best, disps, slot, max_disp, axis):
    du = disps[best, 0]
    dv = disps[best, 1]
    step = np.array([1, 0]) if axis == 0 else np.array([0, 1])
    lo_u, lo_v = du - step[0], dv - step[1]
    hi_u, hi_v = du + step[0], dv + step[1]
    ok = (
        (np.abs(lo_u) <= max_disp)
        & (np.abs(lo_v) <= max_disp)
        & (np.abs(hi_u) <= max_disp)
        & (np.abs(hi_v) <= max_disp)
    )
    lo_slot = slot[np.clip(lo_v + max_disp, 0, 2 * max_disp), np.clip(lo_u + max_disp, 0, 2 * max_disp)]
    hi_slot = slot[np.clip(hi_v + max_disp, 0, 2 * max_disp), np.clip(hi_u + max_disp, 0, 2 * max_disp)]
    grid = np.indices(best.shape)
    s0 = ssd[best, grid[0], grid[1]]
    s_lo = ssd[lo_slot, grid[0], grid[1]]
    s_hi = ssd[hi_slot, grid[0], grid[1]]
    denom = s_lo - 2.0 * s0 + s_hi
    # a zero SSD is already an exact match; the parabola model would drift off it
    delta = np.where(
        ok & (denom > 1e-12) & (s0 > 0.0),
        (s_lo - s_hi) / np.maximum(2.0 * denom, 1e-300),
        0.0,
    )
    return np.clip(delta, -0.5, 0.5)
