"""Backbone feature exchange: FTX container, frame-pair bundles, and
synthetic test pairs.

FTX is the versioned little-endian boundary between the engine and any
feature exporter: a fixed 32-byte header, row-major channel-last f32
payload, and a trailing payload CRC32.
"""

from __future__ import annotations

import enum
import struct
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import core
from .errors import DimensionError, FormatError, NumericError
from .flowio import FlowField, read_flo, write_flo

FTX_MAGIC = b"FTX1"
FTX_VERSION = 1
_HEADER = struct.Struct("<4sBBBB6I")

BUNDLE_FILES = {
    "dino1": "dino_1.ftx",
    "dino2": "dino_2.ftx",
    "depth1": "depth_1.ftx",
    "depth2": "depth_2.ftx",
}
BUNDLE_GT_FILE = "gt.flo"


class Source(enum.IntEnum):
    DINO = 0
    DEPTH = 1
    SYNTHETIC = 2


@dataclass(frozen=True)
class FeatureRecord:
    """One backbone feature map for one frame of a pair."""

    source: Source
    frame_index: int
    stride_wrt_image: int
    image_h: int
    image_w: int
    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise DimensionError(f"feature data must be (h, w, c), got {data.shape}")
        if not np.isfinite(data).all():
            raise NumericError("feature record contains non-finite values")
        if self.frame_index not in (1, 2):
            raise DimensionError(f"frame_index must be 1 or 2, got {self.frame_index}")
        if self.stride_wrt_image < 1 or self.image_h < 1 or self.image_w < 1:
            raise DimensionError(
                f"stride/image extents must be positive, got stride "
                f"{self.stride_wrt_image}, image {self.image_h}x{self.image_w}"
            )
        if self.source == Source.DINO:
            want = (-(-self.image_h // 8), -(-self.image_w // 8))
            if data.shape[:2] != want:
                raise DimensionError(
                    f"DINO grid must be ceil(image/8) = {want} for a declared "
                    f"{self.image_h}x{self.image_w} image, got {data.shape[:2]}"
                )
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def w(self) -> int:
        return self.data.shape[1]

    @property
    def c(self) -> int:
        return self.data.shape[2]


def write_ftx(rec: FeatureRecord, path: str | Path) -> None:
    payload = rec.data.astype("<f4").tobytes()
    header = _HEADER.pack(
        FTX_MAGIC, FTX_VERSION, int(rec.source), rec.frame_index, 0,
        rec.h, rec.w, rec.c, rec.stride_wrt_image, rec.image_h, rec.image_w,
    )
    with open(path, "wb") as fp:
        fp.write(header)
        fp.write(payload)
        fp.write(struct.pack("<I", zlib.crc32(payload)))


def read_ftx(path: str | Path) -> FeatureRecord:
    raw = Path(path).read_bytes()
    if raw[:4] != FTX_MAGIC:
        raise FormatError("bad feature file magic", offset=0)
    if len(raw) < _HEADER.size:
        raise FormatError("feature file shorter than its header", offset=len(raw))
    magic, version, source, frame, reserved, h, w, c, stride, img_h, img_w = (
        _HEADER.unpack_from(raw)
    )
    if version != FTX_VERSION:
        raise FormatError(f"unsupported feature file version {version}", offset=4)
    try:
        src = Source(source)
    except ValueError:
        raise FormatError(f"unknown source code {source}", offset=5) from None
    if frame not in (1, 2):
        raise FormatError(f"frame index must be 1 or 2, got {frame}", offset=6)
    if reserved != 0:
        raise FormatError(f"reserved byte must be 0, got {reserved}", offset=7)
    if min(h, w, c, stride, img_h, img_w) < 1:
        raise FormatError("header extents must be positive", offset=8)
    count = h * w * c
    expected = _HEADER.size + 4 * count + 4
    if len(raw) < expected:
        raise FormatError(
            f"payload truncated, expected {expected} bytes", offset=len(raw)
        )
    payload = raw[_HEADER.size : _HEADER.size + 4 * count]
    (crc,) = struct.unpack_from("<I", raw, _HEADER.size + 4 * count)
    if crc != zlib.crc32(payload):
        raise FormatError("payload CRC mismatch", offset=_HEADER.size + 4 * count)
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
    finite = np.isfinite(data)
    if not finite.all():
        first = int(np.flatnonzero(~finite.ravel())[0])
        raise FormatError("non-finite feature value", offset=_HEADER.size + 4 * first)
    return FeatureRecord(
        source=src, frame_index=frame, stride_wrt_image=stride,
        image_h=img_h, image_w=img_w, data=data.astype(np.float32),
    )


@dataclass(frozen=True)
class FramePairBundle:
    """All four feature records for a frame pair, plus optional ground truth."""

    image_h: int
    image_w: int
    dino1: FeatureRecord
    dino2: FeatureRecord
    depth1: FeatureRecord
    depth2: FeatureRecord
    gt: FlowField | None = None

    def __post_init__(self) -> None:
        slots = {
            "dino1": (self.dino1, 1, (Source.DINO, Source.SYNTHETIC)),
            "dino2": (self.dino2, 2, (Source.DINO, Source.SYNTHETIC)),
            "depth1": (self.depth1, 1, (Source.DEPTH, Source.SYNTHETIC)),
            "depth2": (self.depth2, 2, (Source.DEPTH, Source.SYNTHETIC)),
        }
        for name, (rec, frame, sources) in slots.items():
            if rec.frame_index != frame:
                raise DimensionError(f"{name} must have frame_index {frame}")
            if rec.source not in sources:
                raise DimensionError(f"{name} has source {rec.source.name}")
            if (rec.image_h, rec.image_w) != (self.image_h, self.image_w):
                raise DimensionError(
                    f"{name} declares image {rec.image_h}x{rec.image_w}, "
                    f"bundle says {self.image_h}x{self.image_w}"
                )
        if self.dino1.data.shape != self.dino2.data.shape:
            raise DimensionError("frame-1 and frame-2 DINO shapes differ")
        if self.depth1.data.shape != self.depth2.data.shape:
            raise DimensionError("frame-1 and frame-2 depth shapes differ")
        if self.gt is not None and (self.gt.height, self.gt.width) != (
            self.image_h, self.image_w,
        ):
            raise DimensionError(
                f"ground truth extent {self.gt.height}x{self.gt.width} does not "
                f"match image {self.image_h}x{self.image_w}"
            )


def write_bundle(bundle: FramePairBundle, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for attr, filename in BUNDLE_FILES.items():
        write_ftx(getattr(bundle, attr), directory / filename)
    if bundle.gt is not None:
        write_flo(bundle.gt, directory / BUNDLE_GT_FILE)


def read_bundle(directory: str | Path) -> FramePairBundle:
    directory = Path(directory)
    records = {}
    for attr, filename in BUNDLE_FILES.items():
        path = directory / filename
        if not path.is_file():
            raise FormatError(f"bundle is missing {filename} in {directory}")
        records[attr] = read_ftx(path)
    gt_path = directory / BUNDLE_GT_FILE
    gt = read_flo(gt_path) if gt_path.is_file() else None
    first = records["dino1"]
    return FramePairBundle(
        image_h=first.image_h, image_w=first.image_w, gt=gt, **records
    )


def shift_valid_cells(h: int, w: int, dx: int, dy: int) -> np.ndarray:
    """Cells whose shifted target stays on the grid (no cyclic wrap)."""
    xs = np.arange(w) + dx
    ys = np.arange(h) + dy
    ok_x = (xs >= 0) & (xs < w)
    ok_y = (ys >= 0) & (ys < h)
    return ok_y[:, None] & ok_x[None, :]


def synth_shifted_pair(
    h: int, w: int, c: int, shift: tuple[int, int], sharpness: float
) -> FramePairBundle:
    """Construct a pair whose true flow is a known constant shift.

    Frame-1 features are one-hot per cell (channel = flattened cell index)
    scaled by `sharpness`; frame 2 is frame 1 cyclically shifted by
    (dx, dy) cells. Ground truth is the constant (8*dx, 8*dy) pixels at
    full resolution, with wrap-contaminated pixels masked invalid.
    """
    dx, dy = shift
    if abs(dx) >= w or abs(dy) >= h:
        raise DimensionError(f"shift {shift} out of range for a {h}x{w} grid")
    if c < h * w:
        raise DimensionError(
            f"one-hot features need c >= h*w ({h * w}), got {c}"
        )
    f1 = np.zeros((h, w, c), dtype=np.float32)
    idx = np.arange(h * w).reshape(h, w)
    f1.reshape(h * w, c)[np.arange(h * w), idx.ravel()] = np.float32(sharpness)
    f2 = np.roll(f1, shift=(dy, dx), axis=(0, 1))

    image_h, image_w = 8 * h, 8 * w
    gt_data = np.empty((image_h, image_w, 2), dtype=np.float32)
    gt_data[..., 0] = 8.0 * dx
    gt_data[..., 1] = 8.0 * dy
    indicator = shift_valid_cells(h, w, dx, dy).astype(np.float32)[..., None]
    spread = core.bilinear_resize(indicator, image_h, image_w)[..., 0]
    valid = spread > 1.0 - 1e-6
    gt = FlowField(gt_data, None if valid.all() else valid)

    ramp = 0.01 * np.arange(h * w * 4, dtype=np.float32).reshape(h, w, 4)
    depth1 = FeatureRecord(
        source=Source.SYNTHETIC, frame_index=1, stride_wrt_image=8,
        image_h=image_h, image_w=image_w, data=ramp,
    )
    depth2 = replace(depth1, frame_index=2, data=np.roll(ramp, (dy, dx), axis=(0, 1)))

    def record(frame: int, data: np.ndarray) -> FeatureRecord:
        return FeatureRecord(
            source=Source.SYNTHETIC, frame_index=frame, stride_wrt_image=8,
            image_h=image_h, image_w=image_w, data=data,
        )

    return FramePairBundle(
        image_h=image_h, image_w=image_w,
        dino1=record(1, f1), dino2=record(2, f2),
        depth1=depth1, depth2=depth2, gt=gt,
    )
