"""Camera parameter files in the MVSNet ``cam.txt`` layout.

The file holds, in order: a line reading ``extrinsic``, four rows of the
4x4 world-to-camera matrix, a line reading ``intrinsic``, three rows of
the 3x3 pixel intrinsic matrix, and a final line with either two tokens
(``depth_min depth_interval``) or four
(``depth_min depth_interval depth_count depth_max``).  Blank lines are
ignored; everything else is an error reported with its line number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError


@dataclass
class CameraFile:
    """Contents of one camera file.

    ``extrinsic`` maps world to camera coordinates (meters), row-major
    4x4 with bottom row (0, 0, 0, 1); ``intrinsic`` is the 3x3 pixel
    matrix with [2][2] = 1.
    """

    extrinsic: np.ndarray
    intrinsic: np.ndarray
    depth_min: float
    depth_interval: float
    depth_count: int | None = None
    depth_max: float | None = None

    def __post_init__(self):
        self.extrinsic = np.asarray(self.extrinsic, dtype=np.float64)
        self.intrinsic = np.asarray(self.intrinsic, dtype=np.float64)
        if self.extrinsic.shape != (4, 4):
            raise ValueError("extrinsic must be 4x4")
        if self.intrinsic.shape != (3, 3):
            raise ValueError("intrinsic must be 3x3")
        if not np.allclose(self.extrinsic[3], (0.0, 0.0, 0.0, 1.0), atol=1e-9):
            raise ValueError("extrinsic bottom row must be (0, 0, 0, 1)")
        if self.intrinsic[2, 2] != 1.0:
            raise ValueError("intrinsic[2][2] must be 1")
        if not self.depth_min > 0:
            raise ValueError("depth_min must be positive")
        if not self.depth_interval > 0:
            raise ValueError("depth_interval must be positive")
        if self.depth_max is not None and not self.depth_min < self.depth_max:
            raise ValueError("depth_min must be below depth_max")

    def depth_range(self) -> tuple[float, float]:
        """Hypothesis range (min, max); max derived from count when absent."""
        if self.depth_max is not None:
            return self.depth_min, self.depth_max
        count = self.depth_count if self.depth_count is not None else 192
        return self.depth_min, self.depth_min + self.depth_interval * (count - 1)


def _floats(tokens: list[str], line: int, expect: int) -> list[float]:
    if len(tokens) != expect:
        raise FormatError(f"expected {expect} numbers, found {len(tokens)}", line)
    out = []
    for t in tokens:
        try:
            out.append(float(t))
        except ValueError:
            raise FormatError(f"non-numeric token {t!r}", line) from None
    return out


def parse_camera(data: bytes | str) -> CameraFile:
    """Parse camera file bytes; raises :class:`FormatError` on malformed input."""
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"not valid utf-8: {exc}") from None
    else:
        text = data
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(no, ln) for no, ln in lines if ln]
    pos = 0

    def take(what: str):
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0] + 1 if lines else 1
            raise FormatError(f"missing {what}", last)
        item = lines[pos]
        pos += 1
        return item

    no, tag = take("'extrinsic' section")
    if tag.lower() != "extrinsic":
        raise FormatError(f"expected 'extrinsic', found {tag!r}", no)
    ext = np.array(
        [_floats(take("extrinsic row")[1].split(), lines[pos - 1][0], 4) for _ in range(4)]
    )
    no, tag = take("'intrinsic' section")
    if tag.lower() != "intrinsic":
        raise FormatError(f"expected 'intrinsic', found {tag!r}", no)
    intr = np.array(
        [_floats(take("intrinsic row")[1].split(), lines[pos - 1][0], 3) for _ in range(3)]
    )
    no, depth_line = take("depth range line")
    tokens = depth_line.split()
    if len(tokens) == 2:
        dmin, dint = _floats(tokens, no, 2)
        count, dmax = None, None
    elif len(tokens) == 4:
        dmin, dint, fcount, dmax = _floats(tokens, no, 4)
        count = int(fcount)
        if count != fcount or count < 1:
            raise FormatError(f"depth_count must be a positive integer, found {fcount}", no)
    else:
        raise FormatError(f"depth line needs 2 or 4 tokens, found {len(tokens)}", no)
    if pos != len(lines):
        raise FormatError(f"unexpected trailing content {lines[pos][1]!r}", lines[pos][0])
    try:
        return CameraFile(ext, intr, dmin, dint, count, dmax)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def serialize_camera(cam: CameraFile) -> bytes:
    """Write the canonical cam.txt layout; parse(serialize(c)) == c field-for-field."""
    out = ["extrinsic"]
    for row in cam.extrinsic:
        out.append(" ".join(f"{x:.17g}" for x in row))
    out.append("")
    out.append("intrinsic")
    for row in cam.intrinsic:
        out.append(" ".join(f"{x:.17g}" for x in row))
    out.append("")
    if cam.depth_count is not None and cam.depth_max is not None:
        out.append(
            f"{cam.depth_min:.17g} {cam.depth_interval:.17g} "
            f"{cam.depth_count} {cam.depth_max:.17g}"
        )
    else:
        out.append(f"{cam.depth_min:.17g} {cam.depth_interval:.17g}")
    out.append("")
    return "\n".join(out).encode("utf-8")
