"""Readers and writers for the scene file formats.

Every reader/writer pair is a lossless round trip on its value domain:
bit-exact for PFM and .flo (float32), float32-exact for PLY, 8-bit
quantized for images.  All buffers use a top-left pixel origin after
load regardless of on-disk row order, and all parsers raise
:class:`FormatError` instead of crashing on malformed bytes.
"""

from .cameras import CameraFile, parse_camera, serialize_camera
from .dataset import (
    SceneDataset,
    load_scene_dir,
    load_view_maps,
    view_name,
    write_scene_dir,
    write_view_maps,
)
from .errors import FormatError
from .flo import read_flo, write_flo
from .pairs import ViewGraph, parse_pairs, serialize_pairs
from .pfm import read_pfm, write_pfm
from .ply import PointCloud, read_ply, write_ply
from .ppm import read_image, write_image

__all__ = [
    "CameraFile",
    "FormatError",
    "PointCloud",
    "SceneDataset",
    "ViewGraph",
    "load_scene_dir",
    "load_view_maps",
    "parse_camera",
    "parse_pairs",
    "read_flo",
    "read_image",
    "read_pfm",
    "read_ply",
    "serialize_camera",
    "serialize_pairs",
    "view_name",
    "write_flo",
    "write_image",
    "write_pfm",
    "write_ply",
    "write_scene_dir",
    "write_view_maps",
]
