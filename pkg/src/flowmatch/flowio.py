"""Flow-field container, benchmark file codecs, and color rendering.

Codecs are hand-rolled from the byte layouts: the Middlebury .flo format
and the KITTI 16-bit three-channel PNG encoding. PNG support is limited
to what those files need (truecolor, no palette, no interlace) but reads
all five scanline filters.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError, NumericError

FLO_MAGIC = struct.pack("<f", 202021.25)
FLO_INVALID_THRESHOLD = 1e9
FLO_INVALID_SENTINEL = 1e10

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True)
class FlowField:
    """Dense 2-D displacement field, (H, W, 2) with (u, v) last.

    `valid` is an optional (H, W) boolean mask; None means every pixel
    is valid. Data is float32 unless constructed from float64 (kept for
    gradient checks).
    """

    data: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self) -> None:
        dtype = np.float64 if np.asarray(self.data).dtype == np.float64 else np.float32
        data = np.ascontiguousarray(self.data, dtype=dtype)
        if data.ndim != 3 or data.shape[2] != 2:
            raise DimensionError(f"flow data must be (H, W, 2), got {data.shape}")
        if not np.isfinite(data).all():
            raise NumericError("flow field contains non-finite values")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        if self.valid is not None:
            valid = np.ascontiguousarray(self.valid, dtype=bool)
            if valid.shape != data.shape[:2]:
                raise DimensionError(
                    f"valid mask {valid.shape} does not match flow extent {data.shape[:2]}"
                )
            valid.flags.writeable = False
            object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def valid_mask(self) -> np.ndarray:
        if self.valid is None:
            return np.ones(self.data.shape[:2], dtype=bool)
        return self.valid


def write_flo(field: FlowField, path: str | Path) -> None:
    """Middlebury .flo: f32 magic, i32 width/height, interleaved (u,v)."""
    h, w = field.height, field.width
    data = field.data.astype(np.float32, copy=True)
    if field.valid is not None:
        data[~field.valid] = FLO_INVALID_SENTINEL
    with open(path, "wb") as fp:
        fp.write(FLO_MAGIC)
        fp.write(struct.pack("<ii", w, h))
        fp.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_flo(path: str | Path) -> FlowField:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FormatError("flow file shorter than its header", offset=len(raw))
    if raw[0:4] != FLO_MAGIC:
        raise FormatError("bad flow file magic", offset=0)
    w, h = struct.unpack_from("<ii", raw, 4)
    if w <= 0 or h <= 0:
        raise FormatError(f"bad flow extent {w}x{h}", offset=4)
    expected = 12 + 8 * w * h
    if len(raw) < expected:
        raise FormatError(
            f"flow payload truncated, expected {expected} bytes", offset=len(raw)
        )
    data = np.frombuffer(raw, dtype="<f4", count=2 * w * h, offset=12)
    data = data.reshape(h, w, 2).astype(np.float32)
    with np.errstate(invalid="ignore"):
        # NaN compares false, so non-finite samples land in the invalid mask.
        valid = (np.abs(data) <= FLO_INVALID_THRESHOLD).all(axis=2)
    data[~valid] = 0.0
    return FlowField(data, None if valid.all() else valid)


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload))
    )


def _write_png_rgb(path: str | Path, image: np.ndarray, bitdepth: int) -> None:
    h, w, _ = image.shape
    sample = image.astype(">u2") if bitdepth == 16 else image.astype(np.uint8)
    rows = b"".join(b"\x00" + sample[y].tobytes() for y in range(h))
    ihdr = struct.pack(">IIBBBBB", w, h, bitdepth, 2, 0, 0, 0)
    with open(path, "wb") as fp:
        fp.write(_PNG_SIGNATURE)
        fp.write(_png_chunk(b"IHDR", ihdr))
        fp.write(_png_chunk(b"IDAT", zlib.compress(rows, 6)))
        fp.write(_png_chunk(b"IEND", b""))


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw: bytes, h: int, stride: int, bpp: int) -> bytearray:
    out = bytearray(h * stride)
    prev = bytes(stride)
    for y in range(h):
        base = y * (stride + 1)
        ftype = raw[base]
        row = bytearray(raw[base + 1 : base + 1 + stride])
        if ftype == 1:
            for i in range(bpp, stride):
                row[i] = (row[i] + row[i - bpp]) & 0xFF
        elif ftype == 2:
            for i in range(stride):
                row[i] = (row[i] + prev[i]) & 0xFF
        elif ftype == 3:
            for i in range(stride):
                left = row[i - bpp] if i >= bpp else 0
                row[i] = (row[i] + ((left + prev[i]) >> 1)) & 0xFF
        elif ftype == 4:
            for i in range(stride):
                left = row[i - bpp] if i >= bpp else 0
                upleft = prev[i - bpp] if i >= bpp else 0
                row[i] = (row[i] + _paeth(left, prev[i], upleft)) & 0xFF
        elif ftype != 0:
            raise FormatError(f"unknown PNG filter type {ftype}", offset=base)
        out[y * stride : (y + 1) * stride] = row
        prev = row
    return out


def _read_png_rgb(path: str | Path) -> tuple[np.ndarray, int]:
    raw = Path(path).read_bytes()
    if raw[:8] != _PNG_SIGNATURE:
        raise FormatError("not a PNG file", offset=0)
    pos = 8
    header: tuple | None = None
    idat = bytearray()
    while pos + 8 <= len(raw):
        length, tag = struct.unpack_from(">I4s", raw, pos)
        end = pos + 8 + length + 4
        if end > len(raw):
            raise FormatError("truncated PNG chunk", offset=pos)
        payload = raw[pos + 8 : pos + 8 + length]
        crc = struct.unpack_from(">I", raw, pos + 8 + length)[0]
        if crc != zlib.crc32(tag + payload):
            raise FormatError(f"bad CRC in {tag.decode('latin1')} chunk", offset=pos + 8 + length)
        if tag == b"IHDR":
            header = struct.unpack(">IIBBBBB", payload)
        elif tag == b"IDAT":
            idat.extend(payload)
        elif tag == b"IEND":
            break
        pos = end
    if header is None:
        raise FormatError("PNG has no IHDR chunk", offset=8)
    w, h, bitdepth, color, compression, filt, interlace = header
    if color != 2:
        raise FormatError(f"need truecolor PNG (color type 2), got {color}", offset=16)
    if compression or filt or interlace:
        raise FormatError("unsupported PNG compression/filter/interlace mode", offset=16)
    if bitdepth not in (8, 16):
        raise FormatError(f"unsupported PNG bit depth {bitdepth}", offset=16)
    try:
        plain = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise FormatError(f"corrupt PNG pixel stream: {exc}", offset=8) from None
    bpp = 3 * (bitdepth // 8)
    stride = w * bpp
    if len(plain) != h * (stride + 1):
        raise FormatError("PNG pixel stream has wrong length", offset=8)
    pixels = _unfilter(plain, h, stride, bpp)
    dtype = ">u2" if bitdepth == 16 else np.uint8
    image = np.frombuffer(bytes(pixels), dtype=dtype).reshape(h, w, 3)
    return image.astype(np.uint16 if bitdepth == 16 else np.uint8), bitdepth


def write_kitti_png(field: FlowField, path: str | Path) -> None:
    """KITTI encoding: ch1 = u*64 + 2^15, ch2 = v*64 + 2^15, ch3 = valid."""
    u = field.data[..., 0].astype(np.float64)
    v = field.data[..., 1].astype(np.float64)
    image = np.empty((*field.data.shape[:2], 3), dtype=np.uint16)
    image[..., 0] = np.clip(np.rint(u * 64.0) + 32768.0, 0, 65535).astype(np.uint16)
    image[..., 1] = np.clip(np.rint(v * 64.0) + 32768.0, 0, 65535).astype(np.uint16)
    image[..., 2] = field.valid_mask().astype(np.uint16)
    _write_png_rgb(path, image, 16)


def read_kitti_png(path: str | Path) -> FlowField:
    image, bitdepth = _read_png_rgb(path)
    if bitdepth != 16:
        raise FormatError(f"flow PNG must be 16-bit, got {bitdepth}-bit", offset=16)
    u = (image[..., 0].astype(np.float64) - 32768.0) / 64.0
    v = (image[..., 1].astype(np.float64) - 32768.0) / 64.0
    valid = image[..., 2] > 0
    data = np.stack([u, v], axis=2).astype(np.float32)
    data[~valid] = 0.0
    return FlowField(data, None if valid.all() else valid)


def _colorwheel() -> np.ndarray:
    # Middlebury wheel: 55 hues over six unevenly sized arcs.
    arcs = [(15, 0, 1, False), (6, 0, 1, True), (4, 1, 2, False),
            (11, 1, 2, True), (13, 2, 0, False), (6, 2, 0, True)]
    rows = []
    for count, hold, ramp, descending in arcs:
        block = np.zeros((count, 3), dtype=np.float64)
        block[:, hold] = 255
        grade = np.floor(255.0 * np.arange(count) / count)
        if descending:
            block[:, hold] = 255 - grade
            block[:, ramp] = 255
        else:
            block[:, ramp] = grade
        rows.append(block)
    return np.concatenate(rows, axis=0)


_WHEEL = _colorwheel()


def render_colorwheel(field: FlowField, max_mag: float | None = None) -> np.ndarray:
    """Middlebury color coding of a flow field, returned as (H, W, 3) uint8.

    Hue from atan2(-v, -u), saturation from magnitude relative to max_mag
    (default: 99th percentile of valid magnitudes). Zero flow renders
    white; invalid pixels render black.
    """
    u = field.data[..., 0].astype(np.float64)
    v = field.data[..., 1].astype(np.float64)
    valid = field.valid_mask()
    rad = np.sqrt(u * u + v * v)
    if max_mag is None:
        max_mag = float(np.percentile(rad[valid], 99)) if valid.any() else 1.0
    if not np.isfinite(max_mag) or max_mag <= 0:
        max_mag = 1.0

    ncols = _WHEEL.shape[0]
    angle = np.arctan2(-v, -u) / np.pi
    fk = (angle + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(np.intp)
    k1 = (k0 + 1) % ncols
    frac = (fk - k0)[..., None]
    color = (1.0 - frac) * _WHEEL[k0] / 255.0 + frac * _WHEEL[k1] / 255.0

    ratio = (rad / max_mag)[..., None]
    inside = ratio <= 1.0
    color = np.where(inside, 1.0 - ratio * (1.0 - color), color * 0.75)
    color[~valid] = 0.0
    return np.floor(255.0 * color).astype(np.uint8)


def write_png8(image: np.ndarray, path: str | Path) -> None:
    """Write an 8-bit RGB image (H, W, 3) uint8."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise DimensionError(f"need (H, W, 3) uint8 image, got {image.shape} {image.dtype}")
    _write_png_rgb(path, image, 8)
