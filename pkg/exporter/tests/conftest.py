"""Shared fixtures: tiny random checkpoints and deterministic test images.

The checkpoints are real transformers models with shrunken dimensions,
saved to disk once per session and loaded back through the same
local-files-only path production exports use. No network involved.
"""

from __future__ import annotations

import numpy as np
import pytest
import torch
from PIL import Image
from transformers import (
    DepthAnythingConfig,
    DepthAnythingForDepthEstimation,
    Dinov2Config,
    Dinov2Model,
)


@pytest.fixture(scope="session")
def dino_ckpt(tmp_path_factory):
    torch.manual_seed(101)
    cfg = Dinov2Config(
        hidden_size=32, num_hidden_layers=2, num_attention_heads=2,
        intermediate_size=64, patch_size=14, image_size=518,
    )
    model = Dinov2Model(cfg)
    path = tmp_path_factory.mktemp("ckpt") / "dino-tiny"
    model.save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def depth_ckpt(tmp_path_factory):
    torch.manual_seed(202)
    backbone = Dinov2Config(
        hidden_size=32, num_hidden_layers=4, num_attention_heads=2,
        intermediate_size=64, patch_size=14, image_size=518,
        out_indices=[1, 2, 3, 4], apply_layernorm=True,
        reshape_hidden_states=False,
    )
    cfg = DepthAnythingConfig(
        backbone_config=backbone, reassemble_hidden_size=32,
        reassemble_factors=[4, 2, 1, 0.5],
        neck_hidden_sizes=[8, 8, 16, 16],
        fusion_hidden_size=16, head_hidden_size=8, patch_size=14,
    )
    model = DepthAnythingForDepthEstimation(cfg)
    path = tmp_path_factory.mktemp("ckpt") / "depth-tiny"
    model.save_pretrained(path)
    return path


def _gradient_image(h: int, w: int, roll: tuple[int, int] = (0, 0)) -> Image.Image:
    ys, xs = np.mgrid[0:h, 0:w]
    rgb = np.stack(
        [
            (xs * 255) // max(w - 1, 1),
            (ys * 255) // max(h - 1, 1),
            ((xs + ys) * 255) // max(h + w - 2, 1),
        ],
        axis=-1,
    ).astype(np.uint8)
    rgb = np.roll(rgb, shift=roll, axis=(0, 1))
    return Image.fromarray(rgb, mode="RGB")


@pytest.fixture(scope="session")
def frame_pair(tmp_path_factory):
    """Two 70x56 frames where frame 2 is frame 1 shifted by (2, 3) pixels."""
    path = tmp_path_factory.mktemp("frames")
    f1 = path / "frame1.png"
    f2 = path / "frame2.png"
    _gradient_image(70, 56).save(f1)
    _gradient_image(70, 56, roll=(2, 3)).save(f2)
    return f1, f2
