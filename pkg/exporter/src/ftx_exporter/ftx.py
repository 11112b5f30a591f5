"""Minimal FTX writer.

The engine side owns the reader; this module only has to produce bytes
that reader accepts: a 32-byte little-endian header, a row-major
channel-last float32 payload, and a trailing CRC32 of the payload.
"""

from __future__ import annotations

import math
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ShapeError

MAGIC = b"FTX1"
VERSION = 1
_HEADER = struct.Struct("<4sBBBB6I")

SOURCE_DINO = 0
SOURCE_DEPTH = 1


def write_record(
    path: str | Path,
    source: int,
    frame_index: int,
    stride_wrt_image: int,
    image_h: int,
    image_w: int,
    data: np.ndarray,
) -> None:
    """Serialize one (h, w, c) float32 feature map."""
    data = np.ascontiguousarray(data, dtype=np.float32)
    if data.ndim != 3:
        raise ShapeError(f"feature data must be (h, w, c), got {data.shape}")
    if not np.isfinite(data).all():
        raise ShapeError("feature data contains non-finite values")
    if frame_index not in (1, 2):
        raise ShapeError(f"frame_index must be 1 or 2, got {frame_index}")
    if min(stride_wrt_image, image_h, image_w) < 1:
        raise ShapeError("stride and image extents must be positive")
    if source == SOURCE_DINO:
        want = (math.ceil(image_h / 8), math.ceil(image_w / 8))
        if data.shape[:2] != want:
            raise ShapeError(
                f"DINO grid must be ceil(image/8) = {want} for a declared "
                f"{image_h}x{image_w} image, got {data.shape[:2]}"
            )
    h, w, c = data.shape
    payload = data.astype("<f4").tobytes()
    header = _HEADER.pack(
        MAGIC, VERSION, source, frame_index, 0,
        h, w, c, stride_wrt_image, image_h, image_w,
    )
    with open(path, "wb") as fp:
        fp.write(header)
        fp.write(payload)
        fp.write(struct.pack("<I", zlib.crc32(payload)))
