"""Frozen backbone loading, digest checks, and feature taps.

Checkpoints are local directories in the usual transformers layout. The
weight files are hashed before anything is deserialized, so a corrupt or
swapped checkpoint is refused without ever reaching torch. Both models
run frozen in eval mode; this package never fine-tunes anything.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import torch
from transformers import Dinov2Model, DepthAnythingForDepthEstimation

from .errors import CheckpointError, ShapeError
from .resize import DECLARED_STRIDE, GridPlan

_WEIGHT_PATTERNS = ("*.safetensors", "pytorch_model*.bin")


def checkpoint_digest(ckpt_dir: str | Path) -> str:
    """SHA-256 over the checkpoint's weight files, in sorted name order.

    File names participate in the hash so renaming a shard changes the
    digest even when the bytes do not.
    """
    ckpt_dir = Path(ckpt_dir)
    if not ckpt_dir.is_dir():
        raise CheckpointError(f"checkpoint directory {ckpt_dir} does not exist")
    files = sorted({p for pat in _WEIGHT_PATTERNS for p in ckpt_dir.glob(pat)})
    if not files:
        raise CheckpointError(f"no weight files found in {ckpt_dir}")
    sha = hashlib.sha256()
    for path in files:
        sha.update(path.name.encode("utf-8"))
        sha.update(b"\0")
        sha.update(path.read_bytes())
    return sha.hexdigest()


def verify_digest(ckpt_dir: str | Path, expected: str | None) -> str:
    """Return the checkpoint digest, refusing on mismatch."""
    digest = checkpoint_digest(ckpt_dir)
    if expected is not None and digest != expected.lower():
        raise CheckpointError(
            f"checkpoint digest mismatch for {ckpt_dir}: expected {expected}, "
            f"computed {digest}"
        )
    return digest


def _freeze(model: torch.nn.Module) -> torch.nn.Module:
    model.eval()
    model.requires_grad_(False)
    return model


def load_dino(ckpt_dir: str | Path, expected_digest: str | None = None):
    """Load a frozen DINOv2 encoder. Returns (model, digest)."""
    digest = verify_digest(ckpt_dir, expected_digest)
    try:
        model = Dinov2Model.from_pretrained(ckpt_dir, local_files_only=True)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot load DINO checkpoint {ckpt_dir}: {exc}") from exc
    return _freeze(model), digest


def load_depth(ckpt_dir: str | Path, expected_digest: str | None = None):
    """Load a frozen Depth-Anything estimator. Returns (model, digest)."""
    digest = verify_digest(ckpt_dir, expected_digest)
    try:
        model = DepthAnythingForDepthEstimation.from_pretrained(
            ckpt_dir, local_files_only=True
        )
    except (OSError, ValueError) as exc:
        raise CheckpointError(
            f"cannot load depth checkpoint {ckpt_dir}: {exc}"
        ) from exc
    return _freeze(model), digest


def dino_grid_features(model: Dinov2Model, pixels: torch.Tensor, plan: GridPlan) -> np.ndarray:
    """Patch-token features reshaped to (grid_h, grid_w, channels)."""
    with torch.no_grad():
        out = model(pixel_values=pixels, interpolate_pos_encoding=True)
    tokens = out.last_hidden_state
    n_patches = plan.grid_h * plan.grid_w
    # Patch tokens sit after the class (and any register) tokens.
    n_special = tokens.shape[1] - n_patches
    if n_special < 1:
        raise ShapeError(
            f"DINO returned {tokens.shape[1]} tokens for a "
            f"{plan.grid_h}x{plan.grid_w} grid"
        )
    grid = tokens[0, n_special:].reshape(plan.grid_h, plan.grid_w, -1)
    return np.ascontiguousarray(grid.numpy(), dtype=np.float32)


def depth_decoder_features(
    model: DepthAnythingForDepthEstimation, pixels: torch.Tensor, plan: GridPlan
) -> np.ndarray:
    """Last decoder feature map before the scalar depth head.

    Captured with a forward pre-hook on the head, so the tap stays valid
    if the decoder internals change. For this decoder family the map
    arrives at exactly token_grid * 8 per side, i.e. stride 1 with
    respect to the declared image extent; anything else is refused.
    """
    captured: list[torch.Tensor] = []

    def grab(module, args):
        captured.append(args[0][module.head_in_index])

    handle = model.head.register_forward_pre_hook(grab)
    try:
        with torch.no_grad():
            model(pixel_values=pixels)
    finally:
        handle.remove()
    if len(captured) != 1:
        raise ShapeError("depth head ran an unexpected number of times")
    feat = captured[0]
    want = (plan.grid_h * DECLARED_STRIDE, plan.grid_w * DECLARED_STRIDE)
    if tuple(feat.shape[-2:]) != want:
        raise ShapeError(
            f"depth decoder tap is {tuple(feat.shape[-2:])}, expected {want} "
            f"for a {plan.grid_h}x{plan.grid_w} token grid"
        )
    hwc = feat[0].permute(1, 2, 0)
    return np.ascontiguousarray(hwc.numpy(), dtype=np.float32)
