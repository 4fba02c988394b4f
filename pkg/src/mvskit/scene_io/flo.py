"""Middlebury ``.flo`` optical-flow files.

Layout: the float32 sentinel 202021.25, int32 width and height, then
``height * width`` interleaved ``(u, v)`` float32 pairs, all little
endian, rows top to bottom.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError

SENTINEL = 202021.25
_MAX_SAMPLES = 1 << 26


def read_flo(data: bytes) -> np.ndarray:
    """Decode flow bytes to a ``(H, W, 2)`` float64 field."""
    if len(data) < 12:
        raise FormatError(f"header needs 12 bytes, found {len(data)}")
    tag, width, height = struct.unpack("<fii", data[:12])
    if tag != SENTINEL:
        raise FormatError(f"bad sentinel {tag!r}, expected {SENTINEL}")
    if width < 1 or height < 1:
        raise FormatError(f"bad dimensions {width}x{height}")
    if width * height * 2 > _MAX_SAMPLES:
        raise FormatError(f"refusing flow of {width * height * 2} samples")
    expected = width * height * 8
    payload = data[12:]
    if len(payload) != expected:
        raise FormatError(f"expected {expected} payload bytes, found {len(payload)}")
    arr = np.frombuffer(payload, dtype="<f4").reshape(height, width, 2)
    return arr.astype(np.float64)


def write_flo(flow: np.ndarray) -> bytes:
    """Encode a ``(H, W, 2)`` flow field."""
    arr = np.asarray(flow)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got shape {arr.shape}")
    h, w = arr.shape[:2]
    return struct.pack("<fii", SENTINEL, w, h) + arr.astype("<f4").tobytes()
