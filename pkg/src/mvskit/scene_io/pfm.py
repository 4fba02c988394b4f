"""Portable float map (PFM) read/write.

Header: magic ``Pf`` (1 channel) or ``PF`` (3 channels), the dimensions
``width height``, and a scale whose sign encodes endianness (negative =
little endian).  The payload stores rows bottom-up; buffers in memory
are top-left origin, so rows are flipped on both read and write.
Values are 32-bit floats: a write/read round trip is bit-exact for any
finite float32 data.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError

_MAX_SAMPLES = 1 << 26
_WS = b" \t\r\n\f\v"


def _header_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-delimited header tokens; returns (tokens, payload offset)."""
    tokens = []
    pos = 0
    n = len(data)
    for _ in range(count):
        while pos < n and data[pos : pos + 1] in _WS:
            pos += 1
        start = pos
        while pos < n and data[pos : pos + 1] not in _WS:
            pos += 1
        if start == pos:
            raise FormatError("truncated header")
        tokens.append(data[start:pos])
    if pos >= n or data[pos : pos + 1] not in _WS:
        raise FormatError("missing whitespace after header")
    return tokens, pos + 1


def read_pfm(data: bytes) -> tuple[np.ndarray, float]:
    """Decode PFM bytes to ``(buffer, scale)``.

    The buffer is ``(H, W)`` float64 for ``Pf`` and ``(H, W, 3)`` for
    ``PF``, top-left origin; ``scale`` keeps the magnitude found in the
    file (endianness stripped).
    """
    tokens, offset = _header_tokens(data, 4)
    magic = tokens[0]
    if magic == b"PF":
        channels = 3
    elif magic == b"Pf":
        channels = 1
    else:
        raise FormatError(f"bad magic {magic!r}, expected 'PF' or 'Pf'")
    try:
        width = int(tokens[1])
        height = int(tokens[2])
        scale = float(tokens[3])
    except ValueError:
        raise FormatError("non-numeric dimension or scale") from None
    if width < 1 or height < 1:
        raise FormatError(f"bad dimensions {width}x{height}")
    if width * height * channels > _MAX_SAMPLES:
        raise FormatError(f"refusing image of {width * height * channels} samples")
    if scale == 0.0:
        raise FormatError("scale must be nonzero")
    dtype = "<f4" if scale < 0 else ">f4"
    expected = width * height * channels * 4
    payload = data[offset:]
    if len(payload) != expected:
        raise FormatError(f"expected {expected} payload bytes, found {len(payload)}")
    arr = np.frombuffer(payload, dtype=dtype).reshape(height, width, channels)
    arr = arr[::-1].astype(np.float64)
    if channels == 1:
        arr = arr[..., 0]
    return np.ascontiguousarray(arr), abs(scale)


def write_pfm(buffer: np.ndarray) -> bytes:
    """Encode a ``(H, W)`` or ``(H, W, 3)`` buffer as little-endian PFM, scale -1."""
    arr = np.asarray(buffer)
    if arr.ndim == 2:
        magic, channels = b"Pf", 1
        arr = arr[..., None]
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic, channels = b"PF", 3
    else:
        raise ValueError(f"PFM supports 1 or 3 channels, got shape {arr.shape}")
    h, w = arr.shape[:2]
    header = magic + b"\n" + f"{w} {h}".encode() + b"\n-1.0\n"
    payload = arr[::-1].astype("<f4").tobytes()
    return header + payload
