"""Binary portable pixmaps (P6) and graymaps (P5).

Samples map linearly to [0, 1] on read (no gamma decoding) and are
quantized back to 8 bits on write, so a write/read round trip is exact
at 8-bit precision.  ``maxval`` other than 255 is rejected unless
``rescale`` is passed, in which case samples are divided by the stated
maxval (single-byte maxvals only).
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError
from .pfm import _header_tokens

_MAX_SAMPLES = 1 << 26


def read_image(data: bytes, rescale: bool = False) -> np.ndarray:
    """Decode P5/P6 bytes to ``(H, W)`` or ``(H, W, 3)`` float64 in [0, 1]."""
    tokens, offset = _header_tokens(data, 4)
    magic = tokens[0]
    if magic == b"P6":
        channels = 3
    elif magic == b"P5":
        channels = 1
    else:
        raise FormatError(f"bad magic {magic!r}, expected 'P5' or 'P6'")
    try:
        width = int(tokens[1])
        height = int(tokens[2])
        maxval = int(tokens[3])
    except ValueError:
        raise FormatError("non-numeric header field") from None
    if width < 1 or height < 1:
        raise FormatError(f"bad dimensions {width}x{height}")
    if width * height * channels > _MAX_SAMPLES:
        raise FormatError(f"refusing image of {width * height * channels} samples")
    if maxval != 255:
        if not rescale:
            raise FormatError(f"maxval {maxval} unsupported, expected 255")
        if not 0 < maxval < 256:
            raise FormatError(f"maxval {maxval} outside single-byte range")
    expected = width * height * channels
    payload = data[offset:]
    if len(payload) != expected:
        raise FormatError(f"expected {expected} payload bytes, found {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    out = arr.astype(np.float64) / float(maxval)
    return out[..., 0] if channels == 1 else out


def write_image(buffer: np.ndarray) -> bytes:
    """Encode a float buffer in [0, 1] as P5 (2D) or P6 (3-channel)."""
    arr = np.asarray(buffer, dtype=np.float64)
    if arr.ndim == 2:
        magic, channels = b"P5", 1
        arr = arr[..., None]
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic, channels = b"P6", 3
    else:
        raise ValueError(f"image must be (H, W) or (H, W, 3), got shape {arr.shape}")
    h, w = arr.shape[:2]
    quant = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    return magic + f"\n{w} {h}\n255\n".encode() + quant.tobytes()
