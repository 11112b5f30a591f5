"""Resize policy and image preprocessing.

Both backbones consume patch-14 vision transformers, while the matching
engine requires DINO grids of exactly ceil(image/8) cells. The policy
here reconciles the two: resize each frame to the nearest multiple of 14
per side, run the backbones at that resolution, and declare the image
extent as token_grid * 8 in every emitted record. The declared extent
then satisfies ceil(declared/8) == token_grid by construction, and flow
produced from these records lives at the declared resolution rather than
the native one.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .errors import ImageError

PATCH = 14
DECLARED_STRIDE = 8
RESIZE_POLICY = "round-to-patch14-grid, declared extent = tokens * 8"

# Standard ImageNet statistics, shared by both backbone families.
_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


@dataclass(frozen=True)
class GridPlan:
    """Resolved geometry for one frame pair."""

    orig_h: int
    orig_w: int
    input_h: int
    input_w: int
    grid_h: int
    grid_w: int
    declared_h: int
    declared_w: int


def _round_to_patch(extent: int) -> int:
    # Round half up, clamped so tiny images still yield one full patch.
    return max(PATCH, PATCH * int(extent / PATCH + 0.5))


def plan_grid(orig_h: int, orig_w: int) -> GridPlan:
    """Choose backbone input size and declared extent for an image."""
    if orig_h < 1 or orig_w < 1:
        raise ImageError(f"image extent must be positive, got {orig_h}x{orig_w}")
    input_h = _round_to_patch(orig_h)
    input_w = _round_to_patch(orig_w)
    grid_h = input_h // PATCH
    grid_w = input_w // PATCH
    return GridPlan(
        orig_h=orig_h, orig_w=orig_w,
        input_h=input_h, input_w=input_w,
        grid_h=grid_h, grid_w=grid_w,
        declared_h=grid_h * DECLARED_STRIDE, declared_w=grid_w * DECLARED_STRIDE,
    )


def load_image(path: str | Path) -> Image.Image:
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        raise ImageError(f"cannot read image {path}: {exc}") from exc


def preprocess(img: Image.Image, plan: GridPlan) -> torch.Tensor:
    """Resize per plan and normalize to a (1, 3, H, W) float32 tensor."""
    if img.size != (plan.orig_w, plan.orig_h):
        raise ImageError(
            f"image is {img.size[1]}x{img.size[0]}, plan expects "
            f"{plan.orig_h}x{plan.orig_w}"
        )
    if img.size != (plan.input_w, plan.input_h):
        img = img.resize((plan.input_w, plan.input_h), Image.BICUBIC)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    arr = (arr - _MEAN) / _STD
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))[None]
