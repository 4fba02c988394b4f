"""Self-supervision objectives with analytic depth gradients.

All masked norms follow one convention: ``||X (.) M||_2`` is the root of
the sum of squared masked entries (a vector 2-norm over the support,
channels included) and ``||M||_1`` counts mask pixels.  Losses report
their scalar value, a per-pixel diagnostic residual, the normalization
count, and — where meaningful — the analytic gradient w.r.t. the depth
map, assembled through the bilinear-sampling and reprojection
Jacobians of :mod:`mvskit.geometry`.

The variance-weighted photometric variant also differentiates w.r.t.
the per-pixel log-variance map.  Its value can be negative through the
log regularizer; every other loss here is non-negative and vanishes
exactly when its residual vanishes on the support.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Camera,
    DepthMap,
    bilinear_sample,
    image_gradient,
    image_gradient_adjoint,
    project_depth_map,
)

DEFAULT_FLOW_WEIGHT = 0.1
DEFAULT_OCCLUSION_EPS = 0.5

_TINY = 1e-30


@dataclass
class LossReport:
    """Scalar loss with its per-pixel diagnostics and gradients."""

    name: str
    value: float
    residual: np.ndarray
    denom: float
    grad_depth: np.ndarray | None = None
    grad_logvar: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out = {"name": self.name, "value": self.value, "denom": self.denom}
        out.update(self.params)
        return out


@dataclass
class AugmentationSpec:
    """Photometric-only image transform: per-channel gain/bias plus gamma.

    Pixel positions are never altered, so augmented images stay in
    correspondence with the originals.
    """

    gain: tuple[float, float, float] = (1.0, 1.0, 1.0)
    bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gamma: float = 1.0
    seed: int = 0

    GAIN_RANGE = (0.8, 1.2)
    BIAS_RANGE = (-0.1, 0.1)
    GAMMA_RANGE = (0.8, 1.25)

    def __post_init__(self):
        for g in self.gain:
            if not self.GAIN_RANGE[0] <= g <= self.GAIN_RANGE[1]:
                raise ValueError(f"gain {g} outside {self.GAIN_RANGE}")
        for b in self.bias:
            if not self.BIAS_RANGE[0] <= b <= self.BIAS_RANGE[1]:
                raise ValueError(f"bias {b} outside {self.BIAS_RANGE}")
        if not self.GAMMA_RANGE[0] <= self.gamma <= self.GAMMA_RANGE[1]:
            raise ValueError(f"gamma {self.gamma} outside {self.GAMMA_RANGE}")


def sample_augmentation(seed: int) -> AugmentationSpec:
    """Draw augmentation parameters uniformly within the declared ranges."""
    rng = np.random.default_rng(seed)
    gain = tuple(rng.uniform(*AugmentationSpec.GAIN_RANGE, size=3))
    bias = tuple(rng.uniform(*AugmentationSpec.BIAS_RANGE, size=3))
    gamma = float(rng.uniform(*AugmentationSpec.GAMMA_RANGE))
    return AugmentationSpec(gain, bias, gamma, seed)


def augment(images: list[np.ndarray], spec: AugmentationSpec) -> list[np.ndarray]:
    """Apply ``clamp((gain * I + bias) ** gamma, 0, 1)`` to every image."""
    out = []
    gain = np.asarray(spec.gain)
    bias = np.asarray(spec.bias)
    for img in images:
        arr = np.asarray(img, dtype=np.float64)
        if arr.ndim == 2:
            x = gain[0] * arr + bias[0]
        else:
            x = gain * arr + bias
        x = np.clip(x, 0.0, None) ** spec.gamma
        out.append(np.clip(x, 0.0, 1.0))
    return out


def _warped_view(image_src, depth, cam_ref, cam_src):
    """Synthesize the source image in the reference frame.

    Returns the warped image, validity mask, and the derivative of each
    warped pixel w.r.t. the reference depth at that pixel.
    """
    grid = project_depth_map(depth, cam_ref, cam_src)
    coords = np.stack([grid.u, grid.v], axis=-1)
    samp = bilinear_sample(image_src, coords)
    if image_src.ndim == 2:
        dwarp_dd = samp.ddx * grid.du_dd + samp.ddy * grid.dv_dd
    else:
        dwarp_dd = samp.ddx * grid.du_dd[..., None] + samp.ddy * grid.dv_dd[..., None]
    return samp.values, grid.mask, dwarp_dd


def _masked_norm_pair(res, res_gx, res_gy, weight):
    """Weighted 2-norms of the intensity and gradient residual stacks."""
    if res.ndim == 3:
        w = weight[..., None]
    else:
        w = weight
    n_int = np.sqrt(np.sum(w * w * res * res))
    n_grad = np.sqrt(np.sum(w * w * (res_gx * res_gx + res_gy * res_gy)))
    return n_int, n_grad


def _photometric_core(image_ref, sources, depth, cam_ref, weights_for):
    """Shared assembly for the photometric losses.

    ``weights_for(mask)`` maps a view's binary mask to its per-pixel
    weight map; gradients are accumulated for both the depth and, via
    the returned per-view caches, the weight maps themselves.
    """
    gx_ref, gy_ref = image_gradient(image_ref)
    grad_depth = np.zeros(depth.shape)
    residual = np.zeros(depth.shape)
    value = 0.0
    denom = 0.0
    views = []
    used = 0
    for image_src, cam_src in sources:
        warped, mask, dwarp_dd = _warped_view(image_src, depth, cam_ref, cam_src)
        if not mask.any():
            continue
        used += 1
        weight = weights_for(mask)
        wsum = float(np.sum(weight))
        res = image_ref - warped
        gx_w, gy_w = image_gradient(warped)
        res_gx = gx_ref - gx_w
        res_gy = gy_ref - gy_w
        n_int, n_grad = _masked_norm_pair(res, res_gx, res_gy, weight)
        value += (n_int + n_grad) / wsum
        denom += wsum
        w2 = weight * weight
        if res.ndim == 3:
            w2e = w2[..., None]
            sq = np.sum(res * res + res_gx * res_gx + res_gy * res_gy, axis=-1)
        else:
            w2e = w2
            sq = res * res + res_gx * res_gx + res_gy * res_gy
        residual += np.sqrt(w2 * sq)
        # d(value)/d(warped): direct intensity term plus the adjoint of the
        # forward-difference operator applied to the gradient term
        d_int = -w2e * res / max(n_int, _TINY)
        d_gx = -w2e * res_gx / max(n_grad, _TINY)
        d_gy = -w2e * res_gy / max(n_grad, _TINY)
        if res.ndim == 3:
            d_warped = d_int.copy()
            for c in range(res.shape[2]):
                d_warped[..., c] += image_gradient_adjoint(d_gx[..., c], d_gy[..., c])
            grad_depth += np.sum(d_warped * dwarp_dd, axis=-1) / wsum
        else:
            d_warped = d_int + image_gradient_adjoint(d_gx, d_gy)
            grad_depth += d_warped * dwarp_dd / wsum
        views.append(
            {
                "mask": mask,
                "weight": weight,
                "wsum": wsum,
                "sq_int": np.sum(res * res, axis=-1) if res.ndim == 3 else res * res,
                "sq_grad": np.sum(res_gx**2 + res_gy**2, axis=-1)
                if res.ndim == 3
                else res_gx**2 + res_gy**2,
                "n_int": n_int,
                "n_grad": n_grad,
            }
        )
    if used == 0:
        raise ValueError("no valid supervision support")
    return value, residual, denom, grad_depth, views


def photometric_loss(
    image_ref: np.ndarray,
    sources: list[tuple[np.ndarray, Camera]],
    depth: DepthMap,
    cam_ref: Camera,
) -> LossReport:
    """Image reconstruction consistency against every source view.

    Each source is warped into the reference frame through the depth
    map; the per-view intensity and gradient residual norms are
    normalized by the view's valid-pixel count and summed over views.
    """
    if not sources:
        raise ValueError("need at least one source view")
    value, residual, denom, grad, _ = _photometric_core(
        np.asarray(image_ref, dtype=np.float64),
        [(np.asarray(i, dtype=np.float64), c) for i, c in sources],
        depth,
        cam_ref,
        lambda mask: mask.astype(np.float64),
    )
    return LossReport("photometric", float(value), residual, denom, grad_depth=grad)


def aleatoric_photometric_loss(
    image_ref: np.ndarray,
    sources: list[tuple[np.ndarray, Camera]],
    depth: DepthMap,
    cam_ref: Camera,
    log_variance: np.ndarray,
) -> LossReport:
    """Photometric consistency weighted by predicted per-pixel data noise.

    Valid-pixel masks are scaled by ``exp(-log_variance) / 2`` and a
    ``mean(log_variance) / 2`` regularizer over the supervised support
    keeps the variance from growing without bound.  Gradients are
    exposed w.r.t. both the depth and the log-variance maps.
    """
    if not sources:
        raise ValueError("need at least one source view")
    log_variance = np.asarray(log_variance, dtype=np.float64)
    if log_variance.shape != depth.shape:
        raise ValueError("log_variance shape must match depth")
    damp = 0.5 * np.exp(-log_variance)
    value, residual, denom, grad_depth, views = _photometric_core(
        np.asarray(image_ref, dtype=np.float64),
        [(np.asarray(i, dtype=np.float64), c) for i, c in sources],
        depth,
        cam_ref,
        lambda mask: damp * mask,
    )
    support = np.zeros(depth.shape, dtype=bool)
    grad_logvar = np.zeros(depth.shape)
    for view in views:
        w = view["weight"]
        n_int, n_grad, wsum = view["n_int"], view["n_grad"], view["wsum"]
        # dw/ds = -w, applied to both norm numerators and the count denominator
        dnum = -(w * w) * (
            view["sq_int"] / max(n_int, _TINY) + view["sq_grad"] / max(n_grad, _TINY)
        )
        grad_logvar += dnum / wsum + (n_int + n_grad) * w / (wsum * wsum)
        support |= view["mask"]
    n_support = int(np.sum(support))
    reg = 0.5 * float(np.mean(log_variance[support]))
    grad_logvar[support] += 0.5 / n_support
    return LossReport(
        "aleatoric_photometric",
        float(value + reg),
        residual,
        denom,
        grad_depth=grad_depth,
        grad_logvar=grad_logvar,
    )


def occlusion_mask(
    flow_fwd: np.ndarray,
    flow_bwd: np.ndarray,
    eps: float = DEFAULT_OCCLUSION_EPS,
    mode: str = "warped",
) -> np.ndarray:
    """Forward-backward consistency check; True marks usable pixels.

    ``warped`` (default) composes the backward flow at the forward
    target, looked up bilinearly, and accepts pixels whose round trip
    stays within ``eps``; pixels whose target leaves the image are
    rejected.  ``literal`` compares the two fields pointwise without
    warping.
    """
    flow_fwd = np.asarray(flow_fwd, dtype=np.float64)
    flow_bwd = np.asarray(flow_bwd, dtype=np.float64)
    if flow_fwd.shape != flow_bwd.shape or flow_fwd.shape[-1] != 2:
        raise ValueError("flow fields must share a (H, W, 2) shape")
    if mode == "literal":
        res = flow_fwd + flow_bwd
        return np.sqrt(np.sum(res * res, axis=-1)) <= eps
    if mode != "warped":
        raise ValueError(f"mode must be 'warped' or 'literal', got {mode!r}")
    h, w = flow_fwd.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    target = np.stack([xs + flow_fwd[..., 0], ys + flow_fwd[..., 1]], axis=-1)
    samp = bilinear_sample(flow_bwd, target)
    res = flow_fwd + samp.values
    return samp.inbounds & (np.sqrt(np.sum(res * res, axis=-1)) <= eps)


def flow_depth_loss(
    virtual_flows: list[np.ndarray],
    measured_flows: list[np.ndarray],
    masks: list[np.ndarray],
    jacobians: list[np.ndarray] | None = None,
) -> LossReport:
    """Cross-view agreement between measured flow and depth-induced flow.

    Per view, pixel errors are the Euclidean flow difference normalized
    by the view's usable-pixel count; at every pixel only the smallest
    error among the views covering it contributes, which discounts
    unreliable flow.  The depth gradient flows through the minimizing
    view's flow Jacobian only.
    """
    if not (len(virtual_flows) == len(measured_flows) == len(masks)) or not masks:
        raise ValueError("need matching non-empty flow/mask lists")
    h, w = masks[0].shape
    per_view = []
    counts = []
    keep = []
    for f_hat, f_meas, mask in zip(virtual_flows, measured_flows, masks):
        cnt = float(np.sum(mask))
        if cnt == 0:
            per_view.append(None)
            counts.append(0.0)
            keep.append(False)
            continue
        diff = np.asarray(f_meas, dtype=np.float64) - np.asarray(f_hat, dtype=np.float64)
        err = np.sqrt(np.sum(diff * diff, axis=-1))
        per_view.append((err / cnt, diff, err))
        counts.append(cnt)
        keep.append(True)
    if not any(keep):
        raise ValueError("no valid supervision support")
    stack = np.full((len(masks), h, w), np.inf)
    for j, (entry, mask) in enumerate(zip(per_view, masks)):
        if entry is not None:
            stack[j] = np.where(mask, entry[0], np.inf)
    any_mask = np.isfinite(stack).any(axis=0)
    best = np.argmin(stack, axis=0)
    min_err = np.where(any_mask, np.take_along_axis(stack, best[None], 0)[0], 0.0)
    value = float(np.sum(min_err))
    grad = None
    if jacobians is not None:
        if len(jacobians) != len(masks):
            raise ValueError("need one jacobian per view")
        grad = np.zeros((h, w))
        for j, entry in enumerate(per_view):
            if entry is None:
                continue
            _, diff, err = entry
            sel = any_mask & (best == j)
            scale = np.where(err > _TINY, 1.0 / np.maximum(err, _TINY), 0.0) / counts[j]
            contrib = -(diff[..., 0] * jacobians[j][..., 0] + diff[..., 1] * jacobians[j][..., 1])
            grad[sel] = (contrib * scale)[sel]
    return LossReport(
        "flow_depth",
        value,
        min_err,
        float(sum(counts)),
        grad_depth=grad,
        params={"views_used": int(np.sum(keep))},
    )


def combined_loss(
    photo: LossReport, flow: LossReport, flow_weight: float = DEFAULT_FLOW_WEIGHT
) -> LossReport:
    """Weighted sum of the photometric and flow-consistency objectives."""
    grad = None
    if photo.grad_depth is not None and flow.grad_depth is not None:
        grad = photo.grad_depth + flow_weight * flow.grad_depth
    return LossReport(
        "self_supervised",
        photo.value + flow_weight * flow.value,
        photo.residual + flow_weight * flow.residual,
        photo.denom + flow.denom,
        grad_depth=grad,
        params={"flow_weight": flow_weight},
    )


def self_training_loss(
    depth_aug: DepthMap, pseudo_label: DepthMap, certain: np.ndarray
) -> LossReport:
    """Consistency of an augmented-input depth against the pseudo label.

    Measured only on pixels the certainty mask retains: the masked
    2-norm of the depth difference over the mask pixel count.  The
    gradient is w.r.t. the augmented-input depth.
    """
    certain = np.asarray(certain, dtype=bool)
    if certain.shape != depth_aug.shape or pseudo_label.shape != depth_aug.shape:
        raise ValueError("shape mismatch")
    count = float(np.sum(certain))
    if count == 0:
        raise ValueError("empty certainty support")
    diff = np.where(certain, depth_aug.values - pseudo_label.values, 0.0)
    norm = float(np.sqrt(np.sum(diff * diff)))
    grad = diff / (max(norm, _TINY) * count)
    return LossReport(
        "self_training",
        norm / count,
        np.abs(diff),
        count,
        grad_depth=grad,
    )
