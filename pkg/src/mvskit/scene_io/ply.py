"""PLY point clouds, ASCII and binary little-endian variants.

Only the vertex element is supported: ``float x, y, z`` plus an
optional ``uchar red, green, blue`` triple.  Coordinates are stored as
float32, so ASCII and binary writes of the same cloud parse back to
identical point sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError

_MAX_VERTICES = 50_000_000


@dataclass
class PointCloud:
    """3D points (meters) with optional 8-bit color."""

    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
            if len(self.colors) != len(self.points):
                raise ValueError("colors and points length mismatch")
        if self.points.size and not np.isfinite(self.points).all():
            raise ValueError("point coordinates must be finite")

    def __len__(self) -> int:
        return len(self.points)


def read_ply(data: bytes) -> PointCloud:
    """Parse PLY bytes; raises :class:`FormatError` on anything unsupported."""
    end = data.find(b"end_header\n")
    if end < 0:
        raise FormatError("missing end_header")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[end + len(b"end_header\n") :]
    if not header or header[0].strip() != "ply":
        raise FormatError("missing 'ply' magic")
    fmt = None
    count = None
    props: list[tuple[str, str]] = []
    in_vertex = False
    for no, raw in enumerate(header[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("comment"):
            continue
        parts = line.split()
        if parts[0] == "format":
            if len(parts) != 3 or parts[2] != "1.0":
                raise FormatError(f"unsupported format line {line!r}", no)
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise FormatError(f"unsupported format {parts[1]!r}", no)
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3:
                raise FormatError(f"malformed element line {line!r}", no)
            if parts[1] != "vertex":
                raise FormatError(f"unsupported element {parts[1]!r}", no)
            if count is not None:
                raise FormatError("duplicate vertex element", no)
            try:
                count = int(parts[2])
            except ValueError:
                raise FormatError(f"bad vertex count {parts[2]!r}", no) from None
            if count < 0 or count > _MAX_VERTICES:
                raise FormatError(f"implausible vertex count {count}", no)
            in_vertex = True
        elif parts[0] == "property":
            if not in_vertex:
                raise FormatError("property outside vertex element", no)
            if len(parts) != 3:
                raise FormatError(f"malformed property line {line!r}", no)
            props.append((parts[1], parts[2]))
        else:
            raise FormatError(f"unsupported header line {line!r}", no)
    if fmt is None or count is None:
        raise FormatError("header lacks format or vertex element")
    names = [n for _, n in props]
    types = [t for t, _ in props]
    if names == ["x", "y", "z"] and types == ["float"] * 3:
        has_color = False
    elif names == ["x", "y", "z", "red", "green", "blue"] and types == [
        "float",
        "float",
        "float",
        "uchar",
        "uchar",
        "uchar",
    ]:
        has_color = True
    else:
        raise FormatError(f"unsupported vertex properties {props}")

    if fmt == "ascii":
        tokens = body.split()
        per = 6 if has_color else 3
        if len(tokens) != count * per:
            raise FormatError(
                f"expected {count * per} vertex tokens, found {len(tokens)}"
            )
        try:
            values = np.array([float(t) for t in tokens], dtype=np.float64)
        except ValueError:
            raise FormatError("non-numeric vertex token") from None
        values = values.reshape(count, per)
        points = values[:, :3].astype(np.float32).astype(np.float64)
        colors = None
        if has_color:
            rgb = values[:, 3:]
            if ((rgb < 0) | (rgb > 255) | (rgb != np.round(rgb))).any():
                raise FormatError("color components must be integers in 0..255")
            colors = rgb.astype(np.uint8)
    else:
        stride = 15 if has_color else 12
        expected = count * stride
        if len(body) != expected:
            raise FormatError(f"expected {expected} payload bytes, found {len(body)}")
        if has_color:
            rec = np.dtype([("xyz", "<f4", 3), ("rgb", "u1", 3)])
            raw = np.frombuffer(body, dtype=rec, count=count)
            points = raw["xyz"].astype(np.float64)
            colors = raw["rgb"].copy()
        else:
            points = np.frombuffer(body, dtype="<f4").reshape(count, 3).astype(np.float64)
            colors = None
    if points.size and not np.isfinite(points).all():
        raise FormatError("non-finite vertex coordinate")
    return PointCloud(points, colors)


def write_ply(cloud: PointCloud, binary: bool = True) -> bytes:
    """Encode a cloud; ``binary`` selects binary_little_endian over ascii."""
    n = len(cloud)
    has_color = cloud.colors is not None
    header = ["ply"]
    header.append("format binary_little_endian 1.0" if binary else "format ascii 1.0")
    header.append(f"element vertex {n}")
    header += ["property float x", "property float y", "property float z"]
    if has_color:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")
    pts32 = cloud.points.astype("<f4")
    if binary:
        if has_color:
            rec = np.empty(n, dtype=np.dtype([("xyz", "<f4", 3), ("rgb", "u1", 3)]))
            rec["xyz"] = pts32
            rec["rgb"] = cloud.colors
            return head + rec.tobytes()
        return head + pts32.tobytes()
    rows = []
    for i in range(n):
        row = " ".join(f"{x:.9g}" for x in pts32[i])
        if has_color:
            c = cloud.colors[i]
            row += f" {c[0]} {c[1]} {c[2]}"
        rows.append(row)
    return head + ("\n".join(rows) + ("\n" if rows else "")).encode("ascii")
