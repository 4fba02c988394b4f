"""On-disk layout for a complete scene.

::

    scene/
      images/00000000.ppm ...
      depths/00000000.pfm ...          (ground-truth depth, optional)
      flows/flow_0000_0001.flo ...     (per ordered pair, optional)
      flows/occ_0000_0001.pgm ...      (occlusion masks, optional)
      cams/00000000_cam.txt ...
      pair.txt
      gt.ply                           (optional)

Estimated products written by the pipeline reuse the same per-view
naming inside their own directories (``depth/``, ``sigma2/`` etc.).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cameras import CameraFile, parse_camera, serialize_camera
from .flo import read_flo, write_flo
from .pairs import ViewGraph, parse_pairs, serialize_pairs
from .pfm import read_pfm, write_pfm
from .ply import PointCloud, read_ply, write_ply
from .ppm import read_image, write_image


def view_name(i: int) -> str:
    return f"{i:08d}"


@dataclass
class SceneDataset:
    """In-memory mirror of a scene directory."""

    images: list[np.ndarray]
    cameras: list[CameraFile]
    pairs: ViewGraph
    depths: list[np.ndarray] | None = None
    flows: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    occlusions: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    gt_cloud: PointCloud | None = None

    @property
    def num_views(self) -> int:
        return len(self.images)


def write_scene_dir(path: str | Path, ds: SceneDataset) -> None:
    root = Path(path)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "cams").mkdir(exist_ok=True)
    for i, (img, cam) in enumerate(zip(ds.images, ds.cameras)):
        (root / "images" / f"{view_name(i)}.ppm").write_bytes(write_image(img))
        (root / "cams" / f"{view_name(i)}_cam.txt").write_bytes(serialize_camera(cam))
    (root / "pair.txt").write_bytes(serialize_pairs(ds.pairs))
    if ds.depths is not None:
        (root / "depths").mkdir(exist_ok=True)
        for i, d in enumerate(ds.depths):
            (root / "depths" / f"{view_name(i)}.pfm").write_bytes(write_pfm(d))
    if ds.flows:
        (root / "flows").mkdir(exist_ok=True)
        for (a, b), flow in sorted(ds.flows.items()):
            name = f"flow_{a:04d}_{b:04d}.flo"
            (root / "flows" / name).write_bytes(write_flo(flow))
        for (a, b), occ in sorted(ds.occlusions.items()):
            name = f"occ_{a:04d}_{b:04d}.pgm"
            (root / "flows" / name).write_bytes(write_image(occ.astype(np.float64)))
    if ds.gt_cloud is not None:
        (root / "gt.ply").write_bytes(write_ply(ds.gt_cloud))


def load_scene_dir(path: str | Path) -> SceneDataset:
    root = Path(path)
    pair_file = root / "pair.txt"
    if not pair_file.is_file():
        raise FileNotFoundError(f"{pair_file} not found")
    pairs = parse_pairs(pair_file.read_bytes())
    images = []
    cameras = []
    for i in range(pairs.num_views):
        images.append(read_image((root / "images" / f"{view_name(i)}.ppm").read_bytes()))
        cameras.append(
            parse_camera((root / "cams" / f"{view_name(i)}_cam.txt").read_bytes())
        )
    depths = None
    if (root / "depths").is_dir():
        depths = [
            read_pfm((root / "depths" / f"{view_name(i)}.pfm").read_bytes())[0]
            for i in range(pairs.num_views)
        ]
    flows: dict[tuple[int, int], np.ndarray] = {}
    occlusions: dict[tuple[int, int], np.ndarray] = {}
    flow_dir = root / "flows"
    if flow_dir.is_dir():
        for f in sorted(flow_dir.glob("flow_*_*.flo")):
            a, b = (int(s) for s in f.stem.split("_")[1:3])
            flows[(a, b)] = read_flo(f.read_bytes())
        for f in sorted(flow_dir.glob("occ_*_*.pgm")):
            a, b = (int(s) for s in f.stem.split("_")[1:3])
            occlusions[(a, b)] = read_image(f.read_bytes()) > 0.5
    gt_cloud = None
    if (root / "gt.ply").is_file():
        gt_cloud = read_ply((root / "gt.ply").read_bytes())
    return SceneDataset(images, cameras, pairs, depths, flows, occlusions, gt_cloud)


def load_view_maps(path: str | Path, count: int) -> list[np.ndarray]:
    """Load the per-view PFM maps of a pipeline output directory."""
    root = Path(path)
    return [read_pfm((root / f"{view_name(i)}.pfm").read_bytes())[0] for i in range(count)]


def write_view_maps(path: str | Path, maps: list[np.ndarray]) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for i, m in enumerate(maps):
        (root / f"{view_name(i)}.pfm").write_bytes(write_pfm(m))
