"""Cross-view depth filtering, point-cloud fusion and benchmark metrics.

Filtering keeps a pixel when enough neighboring views confirm it: the
pixel reprojects into the neighbor, the neighbor's depth there
reprojects back, and both the round-trip pixel distance and the
relative depth difference stay within tolerance.  Fusion back-projects
the surviving pixels to colored world points with optional voxel
deduplication.  Metrics are the classic reconstruction-versus-reference
distances: accuracy / completeness / overall with a distance cap, and
distance-thresholded precision / recall / F-score.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import Camera, DepthMap, bilinear_sample, intrinsic_inverse, project_points
from .scene_io import PointCloud, ViewGraph
from .spatial import KDTree

DEFAULT_MAX_DIST = 20.0


@dataclass
class FusionConfig:
    """Geometric consistency tolerances for depth filtering."""

    geo_depth_tol: float = 0.01
    geo_pix_tol: float = 1.0
    min_consistent_views: int = 3

    def __post_init__(self):
        if self.geo_depth_tol <= 0 or self.geo_pix_tol <= 0 or self.min_consistent_views <= 0:
            raise ValueError("all fusion tolerances must be positive")


def filter_depths(
    depths: list[DepthMap],
    cams: list[Camera],
    graph: ViewGraph,
    cfg: FusionConfig | None = None,
) -> list[np.ndarray]:
    """Per-view masks of pixels confirmed by enough neighboring views."""
    cfg = cfg or FusionConfig()
    if not (len(depths) == len(cams) == graph.num_views):
        raise ValueError("depths, cameras and view graph must agree in size")
    if graph.num_views == 0 or all(len(lst) == 0 for lst in graph.neighbors):
        raise ValueError("view graph has no usable pairs")
    masks = []
    for ref, neigh in enumerate(graph.neighbors):
        depth = depths[ref]
        h, w = depth.shape
        if len(neigh) < cfg.min_consistent_views:
            warnings.warn(
                f"view {ref} has {len(neigh)} neighbors but "
                f"{cfg.min_consistent_views} consistent views are required",
                stacklevel=2,
            )
        consistent = np.zeros((h, w), dtype=np.int64)
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        d = depth.values
        for src, _score in neigh:
            u, v, dhat, front = project_points(xs, ys, d, cams[ref], cams[src])
            samp = bilinear_sample(depths[src].values, np.stack([u, v], axis=-1))
            vmask = bilinear_sample(
                depths[src].valid.astype(np.float64), np.stack([u, v], axis=-1)
            )
            usable = depth.valid & front & samp.inbounds & (vmask.values > 1.0 - 1e-9)
            d_src = np.maximum(samp.values, 1e-12)
            bx, by, d_back, front_back = project_points(u, v, d_src, cams[src], cams[ref])
            pix_err = np.sqrt((bx - xs) ** 2 + (by - ys) ** 2)
            depth_err = np.abs(d_back - d) / np.maximum(d, 1e-12)
            ok = (
                usable
                & front_back
                & (pix_err <= cfg.geo_pix_tol)
                & (depth_err <= cfg.geo_depth_tol)
            )
            consistent += ok
        masks.append(consistent >= cfg.min_consistent_views)
    return masks


def fuse(
    depths: list[DepthMap],
    masks: list[np.ndarray],
    images: list[np.ndarray],
    cams: list[Camera],
    merge_cell: float | None = None,
) -> PointCloud:
    """Back-project every kept pixel to a colored world point.

    ``merge_cell`` enables voxel deduplication: points sharing a cell
    collapse to their centroid (mean color).  Pass ``None`` to keep all
    points.
    """
    pts = []
    cols = []
    for depth, mask, image, cam in zip(depths, masks, images, cams):
        sel = mask & depth.valid
        if not sel.any():
            continue
        h, w = depth.shape
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        d = depth.values[sel]
        kinv = intrinsic_inverse(cam.K)
        px = xs[sel]
        py = ys[sel]
        rx = kinv[0, 0] * px + kinv[0, 1] * py + kinv[0, 2]
        ry = kinv[1, 1] * py + kinv[1, 2]
        cam_pts = np.stack([d * rx, d * ry, d], axis=-1)
        world = (cam_pts - cam.t) @ cam.R
        pts.append(world)
        img = np.asarray(image)
        rgb = img[sel] if img.ndim == 3 else np.repeat(img[sel][:, None], 3, axis=1)
        cols.append(np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8))
    if not pts:
        return PointCloud(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.uint8))
    points = np.concatenate(pts)
    colors = np.concatenate(cols)
    if merge_cell is not None and len(points):
        if merge_cell <= 0:
            raise ValueError("merge_cell must be positive")
        keys = np.floor(points / merge_cell).astype(np.int64)
        _, inverse = np.unique(keys, axis=0, return_inverse=True)
        n = inverse.max() + 1
        acc = np.zeros((n, 3))
        np.add.at(acc, inverse, points)
        cacc = np.zeros((n, 3))
        np.add.at(cacc, inverse, colors.astype(np.float64))
        cnt = np.bincount(inverse, minlength=n).astype(np.float64)[:, None]
        points = acc / cnt
        colors = np.clip(np.round(cacc / cnt), 0, 255).astype(np.uint8)
    return PointCloud(points, colors)


def dtu_metrics(
    recon: PointCloud, reference: PointCloud, max_dist: float = DEFAULT_MAX_DIST
) -> tuple[float, float, float]:
    """Accuracy, completeness and their mean, with distances capped.

    Accuracy is the mean distance from reconstruction points to their
    nearest reference point; completeness swaps the roles; overall is
    the arithmetic mean of the two.
    """
    if len(recon) == 0 or len(reference) == 0:
        raise ValueError("point clouds must be non-empty")
    d_acc, _ = KDTree(reference.points).query(recon.points)
    d_comp, _ = KDTree(recon.points).query(reference.points)
    acc = float(np.mean(np.minimum(d_acc, max_dist)))
    comp = float(np.mean(np.minimum(d_comp, max_dist)))
    return acc, comp, (acc + comp) / 2.0


def f_score(
    recon: PointCloud, reference: PointCloud, threshold: float
) -> tuple[float, float, float]:
    """Distance-thresholded precision, recall and their harmonic mean."""
    if len(recon) == 0 or len(reference) == 0:
        raise ValueError("point clouds must be non-empty")
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    d_p, _ = KDTree(reference.points).query(recon.points)
    d_r, _ = KDTree(recon.points).query(reference.points)
    precision = float(np.mean(d_p <= threshold))
    recall = float(np.mean(d_r <= threshold))
    f = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f
