"""Frame-pair export: two images in, four FTX records plus a manifest out.

The output directory uses the bundle layout the engine reads directly
(dino_1.ftx, dino_2.ftx, depth_1.ftx, depth_2.ftx). The manifest is
deliberately timestamp-free so a repeated export of the same inputs is
byte-identical end to end.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import transformers

from . import backbones, ftx
from .errors import ConfigError, ImageError
from .resize import (
    DECLARED_STRIDE,
    RESIZE_POLICY,
    GridPlan,
    load_image,
    plan_grid,
    preprocess,
)

EXPORTER_VERSION = "0.1.0"

FTX_FILES = {
    ("dino", 1): "dino_1.ftx",
    ("dino", 2): "dino_2.ftx",
    ("depth", 1): "depth_1.ftx",
    ("depth", 2): "depth_2.ftx",
}
MANIFEST_FILE = "manifest.txt"


@dataclass(frozen=True)
class ExportJob:
    """Everything needed to export one frame pair."""

    frame1: Path
    frame2: Path
    out_dir: Path
    dino_dir: Path
    depth_dir: Path
    dino_digest: str | None = None
    depth_digest: str | None = None
    resize_policy: str = RESIZE_POLICY
    threads: int = 1

    def __post_init__(self) -> None:
        for name in ("frame1", "frame2", "out_dir", "dino_dir", "depth_dir"):
            object.__setattr__(self, name, Path(getattr(self, name)))
        if self.resize_policy != RESIZE_POLICY:
            raise ConfigError(f"unknown resize policy {self.resize_policy!r}")
        if self.threads < 1:
            raise ConfigError(f"threads must be positive, got {self.threads}")


@dataclass(frozen=True)
class ExportResult:
    plan: GridPlan
    dino_digest: str
    depth_digest: str
    files: dict[str, Path]
    manifest: Path


def _file_sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _manifest_text(
    job: ExportJob,
    plan: GridPlan,
    digests: dict[str, str],
    model_types: dict[str, str],
    shapes: dict[str, tuple[int, ...]],
) -> str:
    lines = [
        "manifest.version = 1",
        f"exporter.version = {EXPORTER_VERSION}",
        f"exporter.torch = {torch.__version__}",
        f"exporter.transformers = {transformers.__version__}",
        f"exporter.threads = {job.threads}",
        f"resize.policy = {job.resize_policy}",
        f"resize.original = {plan.orig_h}x{plan.orig_w}",
        f"resize.input = {plan.input_h}x{plan.input_w}",
        f"resize.grid = {plan.grid_h}x{plan.grid_w}",
        f"resize.declared = {plan.declared_h}x{plan.declared_w}",
    ]
    for idx, path in (("1", job.frame1), ("2", job.frame2)):
        lines.append(f"frame.{idx}.path = {path}")
        lines.append(f"frame.{idx}.sha256 = {_file_sha256(path)}")
    for name, ckpt in (("dino", job.dino_dir), ("depth", job.depth_dir)):
        lines.append(f"backbone.{name}.path = {ckpt}")
        lines.append(f"backbone.{name}.type = {model_types[name]}")
        lines.append(f"backbone.{name}.sha256 = {digests[name]}")
    for key in sorted(shapes):
        h, w, c = shapes[key]
        lines.append(f"record.{key}.shape = {h}x{w}x{c}")
    return "\n".join(lines) + "\n"


def export_pair(job: ExportJob) -> ExportResult:
    """Run both frozen backbones on a frame pair and write FTX records."""
    torch.set_num_threads(job.threads)
    img1 = load_image(job.frame1)
    img2 = load_image(job.frame2)
    if img1.size != img2.size:
        raise ImageError(
            f"frame sizes differ: {job.frame1} is {img1.size[1]}x{img1.size[0]}, "
            f"{job.frame2} is {img2.size[1]}x{img2.size[0]}"
        )
    plan = plan_grid(img1.size[1], img1.size[0])

    # Digest checks run before any weights are deserialized.
    dino, dino_digest = backbones.load_dino(job.dino_dir, job.dino_digest)
    depth, depth_digest = backbones.load_depth(job.depth_dir, job.depth_digest)

    pixels = {1: preprocess(img1, plan), 2: preprocess(img2, plan)}
    feats: dict[tuple[str, int], np.ndarray] = {}
    for frame in (1, 2):
        feats[("dino", frame)] = backbones.dino_grid_features(dino, pixels[frame], plan)
        feats[("depth", frame)] = backbones.depth_decoder_features(
            depth, pixels[frame], plan
        )

    job.out_dir.mkdir(parents=True, exist_ok=True)
    source_codes = {"dino": ftx.SOURCE_DINO, "depth": ftx.SOURCE_DEPTH}
    strides = {"dino": DECLARED_STRIDE, "depth": 1}
    files: dict[str, Path] = {}
    shapes: dict[str, tuple[int, ...]] = {}
    for (name, frame), filename in FTX_FILES.items():
        path = job.out_dir / filename
        data = feats[(name, frame)]
        ftx.write_record(
            path,
            source=source_codes[name],
            frame_index=frame,
            stride_wrt_image=strides[name],
            image_h=plan.declared_h,
            image_w=plan.declared_w,
            data=data,
        )
        files[filename] = path
        shapes[f"{name}.{frame}"] = data.shape

    manifest_path = job.out_dir / MANIFEST_FILE
    text = _manifest_text(
        job, plan,
        digests={"dino": dino_digest, "depth": depth_digest},
        model_types={
            "dino": dino.config.model_type,
            "depth": depth.config.model_type,
        },
        shapes=shapes,
    )
    manifest_path.write_text(text, encoding="utf-8")
    return ExportResult(
        plan=plan,
        dino_digest=dino_digest,
        depth_digest=depth_digest,
        files=files,
        manifest=manifest_path,
    )
