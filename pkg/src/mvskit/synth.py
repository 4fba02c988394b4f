"""Deterministic synthetic scenes with exact ground truth.

Ray-cast rendering of textured planes and spheres under Lambertian
shading with a fixed directional light, producing per view the image,
the exact depth map, per-pixel hit points and normals.  Cross-view
ground-truth flow and occlusion masks are derived by projecting hit
points and re-casting rays, so depth, flow and the point cloud are
mutually consistent through the projection model in
:mod:`mvskit.geometry`.

Shading is view-independent unless ``specular`` is enabled, which adds
a controlled view-dependent highlight for uncertainty experiments.
Textures are hash-based and depend only on the spec, so rendering the
same spec twice is bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .geometry import Camera, DepthMap, camera_to_file, intrinsic_inverse
from .scene_io import PointCloud, SceneDataset, ViewGraph

_HIT_EPS = 1e-9
_OCC_SLACK = 1e-4


@dataclass
class Texture:
    """Procedural albedo over surface coordinates.

    kinds: ``constant`` (color_a), ``checker`` (cells of ``scale``
    alternating color_a/color_b), ``noise`` (smooth value noise blending
    color_a toward color_b, feature size ``scale``).
    """

    kind: str = "constant"
    color_a: tuple[float, float, float] = (0.6, 0.6, 0.6)
    color_b: tuple[float, float, float] = (0.2, 0.2, 0.2)
    scale: float = 0.25
    seed: int = 0

    def albedo(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            out = np.empty(u.shape + (3,))
            out[:] = self.color_a
            return out
        if self.kind == "checker":
            par = (np.floor(u / self.scale) + np.floor(v / self.scale)) % 2
            a = np.asarray(self.color_a)
            b = np.asarray(self.color_b)
            return np.where(par[..., None] < 0.5, a, b)
        if self.kind == "noise":
            n = 0.65 * _value_noise(u / self.scale, v / self.scale, self.seed)
            n += 0.35 * _value_noise(
                u / self.scale * 2.0 + 17.0, v / self.scale * 2.0 - 9.0, self.seed + 1
            )
            a = np.asarray(self.color_a)
            b = np.asarray(self.color_b)
            return a + (b - a) * n[..., None]
        raise ValueError(f"unknown texture kind {self.kind!r}")


def _hash01(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    h = ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
    h ^= iy.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
    h ^= np.uint64((seed * 0x165667B19E3779F9) & 0xFFFFFFFFFFFFFFFF)
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xFF51AFD7ED558CCD)
    h ^= h >> np.uint64(33)
    return h.astype(np.float64) / float(2**64)


def _value_noise(u: np.ndarray, v: np.ndarray, seed: int) -> np.ndarray:
    iu = np.floor(u)
    iv = np.floor(v)
    fu = u - iu
    fv = v - iv
    # smoothstep weights keep the field C1, so bilinear resampling error stays small
    wu = fu * fu * (3.0 - 2.0 * fu)
    wv = fv * fv * (3.0 - 2.0 * fv)
    iu = iu.astype(np.int64)
    iv = iv.astype(np.int64)
    n00 = _hash01(iu, iv, seed)
    n01 = _hash01(iu + 1, iv, seed)
    n10 = _hash01(iu, iv + 1, seed)
    n11 = _hash01(iu + 1, iv + 1, seed)
    top = n00 + wu * (n01 - n00)
    bot = n10 + wu * (n11 - n10)
    return top + wv * (bot - top)


@dataclass
class Plane:
    """Finite textured rectangle: center point, unit normal, half extents."""

    point: tuple[float, float, float]
    normal: tuple[float, float, float]
    half_u: float
    half_v: float
    texture: Texture = field(default_factory=Texture)

    def frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = np.asarray(self.normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        ref = np.array([0.0, 1.0, 0.0]) if abs(n[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
        axis_u = np.cross(ref, n)
        axis_u /= np.linalg.norm(axis_u)
        axis_v = np.cross(n, axis_u)
        return n, axis_u, axis_v


@dataclass
class Sphere:
    center: tuple[float, float, float]
    radius: float
    texture: Texture = field(default_factory=Texture)


@dataclass
class SceneSpec:
    """Complete deterministic description of a renderable scene."""

    primitives: list
    cameras: list[Camera]
    width: int
    height: int
    light_dir: tuple[float, float, float] = (0.3, -0.5, -0.8)
    ambient: float = 0.6
    specular: float = 0.0
    seed: int = 0


class RayHits(NamedTuple):
    depth: np.ndarray
    prim: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    uv: np.ndarray


@dataclass
class RenderResult:
    """One rendered view with its exact geometric ground truth."""

    camera: Camera
    image: np.ndarray
    depth: DepthMap
    points: np.ndarray
    normals: np.ndarray
    prim: np.ndarray


def cast_rays(
    spec: SceneSpec, cam: Camera, xs: np.ndarray, ys: np.ndarray
) -> "RayHits":
    """Nearest-hit ray casting through pixel coordinates ``(xs, ys)``.

    Returns per-ray depth, primitive index, hit point, surface normal
    and surface coordinates; ``prim`` is -1 and ``depth`` inf where
    nothing is hit.  Depth is the camera-frame z of the hit, which
    equals the ray parameter because directions are scaled to unit
    depth.
    """
    origin = cam.center()
    kinv = intrinsic_inverse(cam.K)
    dx = kinv[0, 0] * xs + kinv[0, 1] * ys + kinv[0, 2]
    dy = kinv[1, 1] * ys + kinv[1, 2]
    dirs_cam = np.stack([dx, dy, np.ones_like(dx)], axis=-1)
    dirs = dirs_cam @ cam.R
    best_s = np.full(xs.shape, np.inf)
    best_prim = np.full(xs.shape, -1, dtype=np.int64)
    best_n = np.zeros(xs.shape + (3,))
    best_uv = np.zeros(xs.shape + (2,))
    for pi, prim in enumerate(spec.primitives):
        if isinstance(prim, Plane):
            n, axis_u, axis_v = prim.frame()
            p0 = np.asarray(prim.point, dtype=np.float64)
            denom = dirs @ n
            safe = np.where(np.abs(denom) > 1e-14, denom, 1.0)
            s = ((p0 - origin) @ n) / safe
            hit = (np.abs(denom) > 1e-14) & (s > _HIT_EPS)
            x = origin + s[..., None] * dirs
            lu = (x - p0) @ axis_u
            lv = (x - p0) @ axis_v
            hit &= (np.abs(lu) <= prim.half_u) & (np.abs(lv) <= prim.half_v)
            better = hit & (s < best_s)
            best_s = np.where(better, s, best_s)
            best_prim = np.where(better, pi, best_prim)
            best_n = np.where(better[..., None], n, best_n)
            best_uv[..., 0] = np.where(better, lu, best_uv[..., 0])
            best_uv[..., 1] = np.where(better, lv, best_uv[..., 1])
        elif isinstance(prim, Sphere):
            c = np.asarray(prim.center, dtype=np.float64)
            r = prim.radius
            if np.linalg.norm(origin - c) <= r:
                raise ValueError(f"camera center inside sphere primitive {pi}")
            oc = origin - c
            qa = np.einsum("...i,...i->...", dirs, dirs)
            qb = 2.0 * (dirs @ oc)
            qc = oc @ oc - r * r
            disc = qb * qb - 4.0 * qa * qc
            hit = disc > 0.0
            sq = np.sqrt(np.where(hit, disc, 0.0))
            s_near = (-qb - sq) / (2.0 * qa)
            s_far = (-qb + sq) / (2.0 * qa)
            s = np.where(s_near > _HIT_EPS, s_near, s_far)
            hit &= s > _HIT_EPS
            x = origin + s[..., None] * dirs
            nrm = (x - c) / r
            theta = np.arccos(np.clip(nrm[..., 2], -1.0, 1.0))
            phi = np.arctan2(nrm[..., 1], nrm[..., 0])
            better = hit & (s < best_s)
            best_s = np.where(better, s, best_s)
            best_prim = np.where(better, pi, best_prim)
            best_n = np.where(better[..., None], nrm, best_n)
            best_uv[..., 0] = np.where(better, phi * r, best_uv[..., 0])
            best_uv[..., 1] = np.where(better, theta * r, best_uv[..., 1])
        else:
            raise ValueError(f"unknown primitive type {type(prim).__name__}")
    points = origin + np.where(np.isfinite(best_s)[..., None], best_s[..., None], 0.0) * dirs
    return RayHits(best_s, best_prim, points, best_n, best_uv)


def render(spec: SceneSpec) -> list[RenderResult]:
    """Render every camera of the spec; raises if a view sees nothing."""
    ys, xs = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    light = np.asarray(spec.light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)
    out = []
    for cam in spec.cameras:
        hits = cast_rays(spec, cam, xs, ys)
        s, prim, points, normals, uv = hits
        hit = prim >= 0
        if not hit.any():
            raise ValueError("camera sees no primitive")
        view_dir = points - cam.center()
        flip = np.einsum("...i,...i->...", normals, view_dir) > 0
        normals = np.where(flip[..., None], -normals, normals)
        albedo = np.zeros(xs.shape + (3,))
        for pi, p in enumerate(spec.primitives):
            sel = prim == pi
            if sel.any():
                albedo[sel] = p.texture.albedo(uv[..., 0][sel], uv[..., 1][sel])
        lambert = spec.ambient + (1.0 - spec.ambient) * np.maximum(
            0.0, np.einsum("...i,i->...", normals, light)
        )
        color = albedo * lambert[..., None]
        if spec.specular > 0.0:
            v = -view_dir / np.maximum(np.linalg.norm(view_dir, axis=-1, keepdims=True), 1e-12)
            half = light + v
            half /= np.maximum(np.linalg.norm(half, axis=-1, keepdims=True), 1e-12)
            gloss = np.maximum(0.0, np.einsum("...i,...i->...", normals, half)) ** 32
            color = color + spec.specular * gloss[..., None]
        color = np.clip(color, 0.0, 1.0)
        color[~hit] = 0.0
        depth = DepthMap(np.where(hit, s, 1.0), hit)
        out.append(RenderResult(cam, color, depth, points, normals, prim))
    return out


def gt_flow(
    spec: SceneSpec,
    view_a: int,
    view_b: int,
    renders: list[RenderResult] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Exact flow fields and occlusion masks between two views.

    Returns ``(flow_ab, flow_ba, occ_a, occ_b)``.  ``flow_ab`` maps a
    pixel of view ``a`` to its hit point's position in view ``b`` minus
    its own position; ``occ_a`` marks pixels of ``a`` whose hit point is
    not the nearest surface seen from ``b`` (depth test with a small
    slack), projects outside ``b``'s image, or has no hit at all.
    """
    if renders is None:
        renders = render(spec)
    f_ab, occ_a = _directed_flow(spec, renders[view_a], spec.cameras[view_b])
    f_ba, occ_b = _directed_flow(spec, renders[view_b], spec.cameras[view_a])
    return f_ab, f_ba, occ_a, occ_b


def _directed_flow(spec, src: RenderResult, cam_to: Camera):
    h, w = src.depth.shape
    pts = src.points.reshape(-1, 3)
    cam_pts = pts @ cam_to.R.T + cam_to.t
    z = cam_pts[:, 2]
    front = z > _HIT_EPS
    zsafe = np.where(front, z, 1.0)
    proj = cam_pts @ cam_to.K.T
    u = proj[:, 0] / zsafe
    v = proj[:, 1] / zsafe
    eps = 1e-9
    inb = front & (u >= -eps) & (u <= w - 1.0 + eps) & (v >= -eps) & (v <= h - 1.0 + eps)
    occ = ~(src.depth.valid.reshape(-1) & inb)
    check = ~occ
    if check.any():
        hits = cast_rays(spec, cam_to, u[check], v[check])
        blocked = (hits.prim >= 0) & (hits.depth < z[check] - _OCC_SLACK)
        occ[np.flatnonzero(check)[blocked]] = True
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    flow = np.stack([u.reshape(h, w) - xs, v.reshape(h, w) - ys], axis=-1)
    flow[~src.depth.valid] = 0.0
    flow[~np.isfinite(flow)] = 0.0
    return flow, occ.reshape(h, w)


def view_cloud(result: RenderResult, step: int = 1) -> PointCloud:
    """Back-projected colored point cloud of one view's valid pixels."""
    sel = result.depth.valid[::step, ::step]
    pts = result.points[::step, ::step][sel]
    cols = np.clip(np.round(result.image[::step, ::step][sel] * 255.0), 0, 255)
    return PointCloud(pts, cols.astype(np.uint8))


def make_dataset(
    spec: SceneSpec,
    renders: list[RenderResult] | None = None,
    with_flows: bool = True,
    cloud_step: int = 2,
    depth_count: int = 192,
) -> SceneDataset:
    """Bundle renders into the on-disk dataset layout of :mod:`mvskit.scene_io`."""
    if renders is None:
        renders = render(spec)
    n = len(renders)
    neighbors = [[(j, 10.0) for j in range(n) if j != i] for i in range(n)]
    graph = ViewGraph(n, neighbors)
    flows = {}
    occs = {}
    if with_flows:
        for a in range(n):
            for b, _ in neighbors[a]:
                if (a, b) in flows:
                    continue
                f_ab, f_ba, occ_a, occ_b = gt_flow(spec, a, b, renders)
                flows[(a, b)] = f_ab
                flows[(b, a)] = f_ba
                occs[(a, b)] = occ_a
                occs[(b, a)] = occ_b
    clouds = [view_cloud(r, cloud_step) for r in renders]
    gt = PointCloud(
        np.concatenate([c.points for c in clouds]),
        np.concatenate([c.colors for c in clouds]),
    )
    return SceneDataset(
        images=[r.image for r in renders],
        cameras=[camera_to_file(r.camera, depth_count) for r in renders],
        pairs=graph,
        depths=[np.where(r.depth.valid, r.depth.values, 0.0) for r in renders],
        flows=flows,
        occlusions=occs,
        gt_cloud=gt,
    )


def acceptance_scene(
    width: int = 128,
    height: int = 128,
    views: int = 3,
    seed: int = 7,
    textureless_strip: bool = False,
    specular: float = 0.0,
) -> SceneSpec:
    """Tilted noise-textured plane + sphere in front of a far background.

    With ``textureless_strip`` a constant-colored band hangs just in
    front of the background, creating a region whose depth the matcher
    cannot pin down.
    """
    k = np.array(
        [
            [float(width), 0.0, (width - 1) / 2.0],
            [0.0, float(width), (height - 1) / 2.0],
            [0.0, 0.0, 1.0],
        ]
    )
    offsets = np.linspace(-0.2, 0.2, views)
    cams = [
        Camera(K=k, R=np.eye(3), t=np.array([-x, 0.0, 0.0]), depth_range=(1.0, 5.4))
        for x in offsets
    ]
    prims = [
        Plane(
            point=(0.0, 0.0, 2.4),
            normal=(0.22, -0.12, -1.0),
            half_u=3.2,
            half_v=3.0,
            texture=Texture("noise", (0.62, 0.54, 0.44), (0.42, 0.46, 0.56), 0.12, seed),
        ),
        Sphere(
            center=(-0.35, 0.3, 2.0),
            radius=0.3,
            texture=Texture("noise", (0.46, 0.6, 0.48), (0.58, 0.42, 0.54), 0.12, seed + 2),
        ),
    ]
    if textureless_strip:
        prims.append(
            Plane(
                point=(0.85, 0.0, 2.5),
                normal=(0.0, 0.0, -1.0),
                half_u=0.45,
                half_v=3.0,
                texture=Texture("constant", (0.55, 0.55, 0.55)),
            )
        )
    return SceneSpec(prims, cams, width, height, seed=seed, specular=specular)


def two_plane_scene(
    width: int = 64, height: int = 64, views: int = 2, seed: int = 3
) -> SceneSpec:
    """Small foreground plane occluding a far plane; drives occlusion tests."""
    k = np.array(
        [
            [float(width), 0.0, (width - 1) / 2.0],
            [0.0, float(width), (height - 1) / 2.0],
            [0.0, 0.0, 1.0],
        ]
    )
    offsets = np.linspace(-0.1, 0.1, views)
    cams = [
        Camera(K=k, R=np.eye(3), t=np.array([-x, 0.0, 0.0]), depth_range=(1.0, 6.0))
        for x in offsets
    ]
    prims = [
        Plane(
            point=(-0.15, 0.0, 2.0),
            normal=(0.0, 0.0, -1.0),
            half_u=0.45,
            half_v=0.55,
            texture=Texture("noise", (0.9, 0.6, 0.3), (0.2, 0.4, 0.6), 0.1, seed),
        ),
        Plane(
            point=(0.0, 0.0, 4.0),
            normal=(0.05, 0.0, -1.0),
            half_u=3.5,
            half_v=3.5,
            texture=Texture("noise", (0.7, 0.75, 0.65), (0.3, 0.25, 0.35), 0.35, seed + 1),
        ),
    ]
    return SceneSpec(prims, cams, width, height, seed=seed)


def scene_preset(name: str, **kwargs) -> SceneSpec:
    """Named scene builders used by the command line."""
    if name == "acceptance":
        return acceptance_scene(**kwargs)
    if name == "acceptance-strip":
        return acceptance_scene(textureless_strip=True, **kwargs)
    if name == "two-plane":
        return two_plane_scene(**kwargs)
    raise ValueError(f"unknown scene preset {name!r}")
