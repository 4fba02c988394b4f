"""Cross-view reprojection, warp fields and differentiable sampling.

Conventions: pixel centers sit at integer coordinates, the homogeneous
lift of a pixel is ``(x, y, 1)``, and camera coordinates follow
``x_cam = R @ x_world + t``.  A point in the reference view with depth
``d`` maps into a source view through

    q = d * A @ (x, y, 1) + b,        p_hat = (q_x / q_z, q_y / q_z)

with ``A = K_src R_src R_ref^T K_ref^-1`` and
``b = K_src (t_src - R_src R_ref^T t_ref)``; ``q_z`` is the depth of
the point in the source camera.  Points with source depth at or below
``BEHIND_EPS`` are masked out rather than clamped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .scene_io import CameraFile

BEHIND_EPS = 1e-6
_BOUNDS_EPS = 1e-9


@dataclass
class Camera:
    """Pinhole camera: intrinsics ``K``, rotation ``R``, translation ``t``.

    ``depth_range`` bounds the depth hypotheses used when estimating
    depth for this view.
    """

    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    depth_range: tuple[float, float]

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if self.K.shape != (3, 3) or self.R.shape != (3, 3):
            raise ValueError("K and R must be 3x3")
        if abs(self.K[2, 2] - 1.0) > 1e-12 or np.abs(self.K[[1, 2, 2], [0, 0, 1]]).max() > 1e-12:
            raise ValueError("K must be upper-triangular with K[2][2] = 1")
        if not np.allclose(self.R @ self.R.T, np.eye(3), atol=1e-6):
            raise ValueError("R must be orthonormal")
        if not np.isclose(np.linalg.det(self.R), 1.0, atol=1e-6):
            raise ValueError("R must have determinant +1")
        lo, hi = self.depth_range
        if not (0 < lo < hi):
            raise ValueError("depth_range must satisfy 0 < min < max")

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.R.T @ self.t


def camera_from_file(cf: CameraFile) -> Camera:
    return Camera(
        K=cf.intrinsic,
        R=cf.extrinsic[:3, :3],
        t=cf.extrinsic[:3, 3],
        depth_range=cf.depth_range(),
    )


def camera_to_file(cam: Camera, depth_count: int = 192) -> CameraFile:
    ext = np.eye(4)
    ext[:3, :3] = cam.R
    ext[:3, 3] = cam.t
    lo, hi = cam.depth_range
    interval = (hi - lo) / (depth_count - 1)
    return CameraFile(ext, cam.K, lo, interval, depth_count, hi)


@dataclass
class DepthMap:
    """Per-pixel depth in meters with a validity mask."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.ndim != 2 or self.valid.shape != self.values.shape:
            raise ValueError("values and valid must be matching 2D arrays")
        sel = self.values[self.valid]
        if sel.size and not (np.isfinite(sel).all() and (sel > 0).all()):
            raise ValueError("valid depths must be finite and positive")

    @classmethod
    def from_array(cls, values: np.ndarray) -> "DepthMap":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.isfinite(values) & (values > 0))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def intrinsic_inverse(K: np.ndarray) -> np.ndarray:
    """Closed-form inverse of an upper-triangular intrinsic matrix."""
    fx, sk, cx = K[0, 0], K[0, 1], K[0, 2]
    fy, cy = K[1, 1], K[1, 2]
    return np.array(
        [
            [1.0 / fx, -sk / (fx * fy), (sk * cy - cx * fy) / (fx * fy)],
            [0.0, 1.0 / fy, -cy / fy],
            [0.0, 0.0, 1.0],
        ]
    )


def relative_projection(cam_ref: Camera, cam_src: Camera) -> tuple[np.ndarray, np.ndarray]:
    """The (A, b) pair mapping reference pixels + depth into source pixels."""
    r_rel = cam_src.R @ cam_ref.R.T
    a = cam_src.K @ r_rel @ intrinsic_inverse(cam_ref.K)
    b = cam_src.K @ (cam_src.t - r_rel @ cam_ref.t)
    return a, b


def reproject_point(
    p: np.ndarray, d: float, cam_ref: Camera, cam_src: Camera
) -> tuple[np.ndarray, float, bool]:
    """Map one reference pixel at depth ``d`` into the source view.

    Returns ``(p_hat, d_hat, valid)`` where ``d_hat`` is the depth of
    the point in the source camera and ``valid`` is False when the
    point lands at or behind the source image plane.
    """
    if not d > 0:
        raise ValueError(f"depth must be positive, got {d}")
    a, b = relative_projection(cam_ref, cam_src)
    q = d * (a @ np.array([p[0], p[1], 1.0])) + b
    if q[2] <= BEHIND_EPS:
        return np.array([np.nan, np.nan]), float(q[2]), False
    return q[:2] / q[2], float(q[2]), True


class ProjectedGrid(NamedTuple):
    """Dense reprojection of a depth map with its depth derivatives."""

    u: np.ndarray
    v: np.ndarray
    src_depth: np.ndarray
    du_dd: np.ndarray
    dv_dd: np.ndarray
    mask: np.ndarray


def project_depth_map(depth: DepthMap, cam_ref: Camera, cam_src: Camera) -> ProjectedGrid:
    """Reproject every valid pixel of ``depth`` into the source view.

    ``mask`` requires a valid depth, a source depth above
    ``BEHIND_EPS`` and coordinates inside the source image rectangle.
    ``du_dd``/``dv_dd`` are the analytic derivatives of the source
    coordinates w.r.t. the pixel's depth.
    """
    h, w = depth.shape
    a, b = relative_projection(cam_ref, cam_src)
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    rx = a[0, 0] * xs + a[0, 1] * ys + a[0, 2]
    ry = a[1, 0] * xs + a[1, 1] * ys + a[1, 2]
    rz = a[2, 0] * xs + a[2, 1] * ys + a[2, 2]
    d = np.where(depth.valid, depth.values, 1.0)
    qx = d * rx + b[0]
    qy = d * ry + b[1]
    qz = d * rz + b[2]
    front = qz > BEHIND_EPS
    zsafe = np.where(front, qz, 1.0)
    u = qx / zsafe
    v = qy / zsafe
    du_dd = (rx - u * rz) / zsafe
    dv_dd = (ry - v * rz) / zsafe
    mask = (
        depth.valid
        & front
        & (u >= -_BOUNDS_EPS)
        & (u <= w - 1.0 + _BOUNDS_EPS)
        & (v >= -_BOUNDS_EPS)
        & (v <= h - 1.0 + _BOUNDS_EPS)
    )
    return ProjectedGrid(u, v, qz, du_dd, dv_dd, mask)


def project_points(
    xs: np.ndarray, ys: np.ndarray, ds: np.ndarray, cam_from: Camera, cam_to: Camera
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Reproject scattered pixels (not necessarily a grid) between views.

    Returns ``(u, v, depth_in_target, front)``.
    """
    a, b = relative_projection(cam_from, cam_to)
    qx = ds * (a[0, 0] * xs + a[0, 1] * ys + a[0, 2]) + b[0]
    qy = ds * (a[1, 0] * xs + a[1, 1] * ys + a[1, 2]) + b[1]
    qz = ds * (a[2, 0] * xs + a[2, 1] * ys + a[2, 2]) + b[2]
    front = qz > BEHIND_EPS
    zsafe = np.where(front, qz, 1.0)
    return qx / zsafe, qy / zsafe, qz, front


def warp_field(
    depth: DepthMap, cam_ref: Camera, cam_src: Camera
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel continuous source coordinates ``(H, W, 2)`` and validity mask."""
    g = project_depth_map(depth, cam_ref, cam_src)
    return np.stack([g.u, g.v], axis=-1), g.mask


def depth_to_flow(
    depth: DepthMap, cam_ref: Camera, cam_src: Camera
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Displacement field induced by a depth map between two views.

    Returns ``(flow, mask, jacobian)``: flow ``(H, W, 2)`` defined as
    target minus source pixel position, the same validity mask as
    :func:`warp_field`, and the ``(H, W, 2)`` analytic derivative of the
    flow w.r.t. depth.
    """
    h, w = depth.shape
    g = project_depth_map(depth, cam_ref, cam_src)
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    flow = np.stack([g.u - xs, g.v - ys], axis=-1)
    jac = np.stack([g.du_dd, g.dv_dd], axis=-1)
    return flow, g.mask, jac


class BilinearSample(NamedTuple):
    """Sampled values with in-bounds flags and coordinate Jacobian."""

    values: np.ndarray
    inbounds: np.ndarray
    ddx: np.ndarray
    ddy: np.ndarray


def bilinear_sample(image: np.ndarray, coords: np.ndarray) -> BilinearSample:
    """Differentiable 4-neighbor interpolation of ``image`` at ``coords``.

    ``coords`` is ``(..., 2)`` in (x, y) order.  Values are sampled with
    clamped neighbors so they are defined everywhere; ``inbounds`` is
    cleared where any neighbor falls outside the image.  ``ddx``/``ddy``
    give the interpolant's derivative w.r.t. the coordinates, matching
    the local forward difference at integer coordinates.
    """
    image = np.asarray(image, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape[-1] != 2:
        raise ValueError("coords must have a trailing dimension of 2")
    grid_shape = coords.shape[:-1]
    xs = coords[..., 0].ravel()
    ys = coords[..., 1].ravel()
    if not (np.isfinite(xs).all() and np.isfinite(ys).all()):
        raise ValueError("coords must be finite")
    if image.ndim == 2:
        vals, ddx, ddy, inb = kernels.bilinear_gather(image, xs, ys)
        return BilinearSample(
            vals.reshape(grid_shape),
            inb.reshape(grid_shape),
            ddx.reshape(grid_shape),
            ddy.reshape(grid_shape),
        )
    chans = image.shape[2]
    vals = np.empty(grid_shape + (chans,))
    ddx = np.empty(grid_shape + (chans,))
    ddy = np.empty(grid_shape + (chans,))
    inb = None
    for c in range(chans):
        vc, dxc, dyc, inb = kernels.bilinear_gather(image[..., c], xs, ys)
        vals[..., c] = vc.reshape(grid_shape)
        ddx[..., c] = dxc.reshape(grid_shape)
        ddy[..., c] = dyc.reshape(grid_shape)
    return BilinearSample(vals, inb.reshape(grid_shape), ddx, ddy)


def image_gradient(image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward-difference x/y gradients, final row/column replicated.

    Output shapes match the input; the last column of ``gx`` and last
    row of ``gy`` are therefore zero.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    if h < 2 or w < 2:
        raise ValueError(f"image must be at least 2x2, got {h}x{w}")
    gx = np.zeros_like(image)
    gy = np.zeros_like(image)
    gx[:, :-1] = image[:, 1:] - image[:, :-1]
    gy[:-1, :] = image[1:, :] - image[:-1, :]
    return gx, gy


def image_gradient_adjoint(dgx: np.ndarray, dgy: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`image_gradient`: pulls gradients on (gx, gy) back to the image."""
    out = np.zeros_like(np.asarray(dgx, dtype=np.float64))
    out[:, :-1] -= dgx[:, :-1]
    out[:, 1:] += dgx[:, :-1]
    out[:-1, :] -= dgy[:-1, :]
    out[1:, :] += dgy[:-1, :]
    return out
