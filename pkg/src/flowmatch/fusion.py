"""Cross-modal fusion: depth-feature projection, channel concatenation,
and residual fusion blocks producing the matching representation.

The projection chain is purely linear (stride-managed convs + a 1x1
channel mapper); nonlinearities live inside the residual fusion blocks.
Layer counts and widths are configurable; the defaults are two
stride-managed convs, one mapper, and two residual blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import core
from .errors import ConfigError, DimensionError, NumericError
from .features import FeatureRecord, FramePairBundle, Source


def gelu(x: np.ndarray) -> np.ndarray:
    """Smooth GELU (tanh form); tolerance-tested, not bit-pinned."""
    x = np.asarray(x)
    c = math.sqrt(2.0 / math.pi)
    inner = c * (x + 0.044715 * x * x * x)
    return (0.5 * x * (1.0 + np.tanh(inner))).astype(x.dtype)


@dataclass(frozen=True)
class ConvLayer:
    """One conv's parameters. Padding is implied: (k - stride) / 2."""

    kernel: np.ndarray
    bias: np.ndarray
    stride: int = 1

    def __post_init__(self) -> None:
        kernel = np.ascontiguousarray(self.kernel, dtype=np.float32)
        bias = np.ascontiguousarray(self.bias, dtype=np.float32)
        if kernel.ndim != 4:
            raise DimensionError(f"conv kernel must be 4-D, got {kernel.shape}")
        if bias.shape != (kernel.shape[3],):
            raise DimensionError(
                f"bias shape {bias.shape} does not match {kernel.shape[3]} outputs"
            )
        if self.stride < 1:
            raise ConfigError(f"conv stride must be >= 1, got {self.stride}")
        if (kernel.shape[0] - self.stride) % 2 or (kernel.shape[1] - self.stride) % 2:
            raise ConfigError(
                f"kernel {kernel.shape[0]}x{kernel.shape[1]} with stride "
                f"{self.stride} has no symmetric padding"
            )
        if not (np.isfinite(kernel).all() and np.isfinite(bias).all()):
            raise NumericError("conv parameters contain non-finite values")
        kernel.flags.writeable = False
        bias.flags.writeable = False
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "bias", bias)

    @property
    def cin(self) -> int:
        return self.kernel.shape[2]

    @property
    def cout(self) -> int:
        return self.kernel.shape[3]

    @property
    def pad(self) -> int:
        return (self.kernel.shape[0] - self.stride) // 2

    def apply(self, x: np.ndarray) -> np.ndarray:
        return core.conv2d(x, self.kernel, self.bias, stride=self.stride, pad=self.pad)


@dataclass(frozen=True)
class ResidualBlock:
    """x + conv2(gelu(conv1(x))), width-preserving."""

    conv1: ConvLayer
    conv2: ConvLayer

    def __post_init__(self) -> None:
        if not (self.conv1.cin == self.conv1.cout == self.conv2.cin == self.conv2.cout):
            raise ConfigError(
                "residual block must preserve width, got "
                f"{self.conv1.cin}->{self.conv1.cout}->{self.conv2.cout}"
            )
        if self.conv1.stride != 1 or self.conv2.stride != 1:
            raise ConfigError("residual block convs must have stride 1")

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x + self.conv2.apply(gelu(self.conv1.apply(x)))


@dataclass(frozen=True)
class FusionWeights:
    """Projection chain plus fusion mapper and residual blocks."""

    proj_convs: tuple[ConvLayer, ...]
    fusion_mapper: ConvLayer
    fusion_blocks: tuple[ResidualBlock, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "proj_convs", tuple(self.proj_convs))
        object.__setattr__(self, "fusion_blocks", tuple(self.fusion_blocks))
        if not self.proj_convs:
            raise ConfigError("projection chain needs at least one conv")
        for i in range(1, len(self.proj_convs)):
            prev, cur = self.proj_convs[i - 1], self.proj_convs[i]
            if cur.cin != prev.cout:
                raise ConfigError(
                    f"proj.{i}.kernel expects {cur.cin} channels but "
                    f"proj.{i - 1} produces {prev.cout}"
                )
        d = self.fusion_mapper.cout
        for i, block in enumerate(self.fusion_blocks):
            if block.conv1.cin != d:
                raise ConfigError(
                    f"fuse.block{i} width {block.conv1.cin} does not match "
                    f"mapper output {d}"
                )

    @property
    def proj_in_channels(self) -> int:
        return self.proj_convs[0].cin

    @property
    def proj_out_channels(self) -> int:
        return self.proj_convs[-1].cout

    @property
    def fused_channels(self) -> int:
        return self.fusion_mapper.cout

    @property
    def stride_product(self) -> int:
        out = 1
        for conv in self.proj_convs:
            out *= conv.stride
        return out


@dataclass(frozen=True)
class FusedFeatures:
    f1_hat: np.ndarray
    f2_hat: np.ndarray

    def __post_init__(self) -> None:
        if self.f1_hat.shape != self.f2_hat.shape:
            raise DimensionError(
                f"fused frames must share a shape, got {self.f1_hat.shape} "
                f"vs {self.f2_hat.shape}"
            )


def project_depth(fz: FeatureRecord, weights: FusionWeights) -> np.ndarray:
    """Align a depth-slot record to matching resolution and width."""
    if fz.source == Source.DINO:
        raise ConfigError("projection expects a depth-slot record, got a DINO record")
    if fz.c != weights.proj_in_channels:
        raise ConfigError(
            f"proj.0.kernel expects {weights.proj_in_channels} input channels, "
            f"depth record has {fz.c}"
        )
    x = fz.data
    for i, conv in enumerate(weights.proj_convs):
        if x.shape[0] % conv.stride or x.shape[1] % conv.stride:
            raise ConfigError(
                f"proj.{i} stride {conv.stride} does not divide the "
                f"{x.shape[0]}x{x.shape[1]} depth grid"
            )
        x = conv.apply(x)
    return x


def fuse(fd: np.ndarray, fz_proj: np.ndarray, weights: FusionWeights) -> np.ndarray:
    """Concatenate modalities, map to matching width, refine residually."""
    if fd.ndim != 3 or fz_proj.ndim != 3:
        raise DimensionError("fuse expects (h, w, c) feature maps")
    if fd.shape[:2] != fz_proj.shape[:2]:
        raise DimensionError(
            f"spatial mismatch: {fd.shape[:2]} vs {fz_proj.shape[:2]}"
        )
    want = weights.fusion_mapper.cin
    have = fd.shape[2] + fz_proj.shape[2]
    if have != want:
        raise ConfigError(
            f"fuse.mapper.kernel expects {want} concatenated channels, got {have}"
        )
    x = np.concatenate([fd, fz_proj], axis=2)
    x = weights.fusion_mapper.apply(x)
    for block in weights.fusion_blocks:
        x = block.apply(x)
    return x


def fusion_enabled_toggle(
    bundle: FramePairBundle, weights: FusionWeights | None, enabled: bool
) -> FusedFeatures:
    """Fused per-frame features, or the untouched DINO-slot path when
    fusion is disabled (depth records are then never read)."""
    if not enabled:
        return FusedFeatures(bundle.dino1.data, bundle.dino2.data)
    if weights is None:
        raise ConfigError("fusion is enabled but no fusion weights were given")
    out = []
    for dino, depth in ((bundle.dino1, bundle.depth1), (bundle.dino2, bundle.depth2)):
        proj = project_depth(depth, weights)
        if proj.shape[:2] != dino.data.shape[:2]:
            raise ConfigError(
                f"projection chain yields {proj.shape[0]}x{proj.shape[1]} but the "
                f"matching grid is {dino.h}x{dino.w}; stride chain does not "
                "bridge the resolution gap"
            )
        out.append(fuse(dino.data, proj, weights))
    return FusedFeatures(out[0], out[1])


def _conv_init(rng: np.random.Generator, kh: int, kw: int, cin: int, cout: int,
               stride: int = 1) -> ConvLayer:
    scale = 1.0 / math.sqrt(kh * kw * cin)
    kernel = rng.normal(0.0, scale, size=(kh, kw, cin, cout)).astype(np.float32)
    return ConvLayer(kernel=kernel, bias=np.zeros(cout, dtype=np.float32), stride=stride)


def random_fusion_weights(
    rng: np.random.Generator,
    depth_channels: int,
    proj_channels: int,
    dino_channels: int,
    fused_channels: int,
    stride_ratio: int = 1,
    blocks: int = 2,
) -> FusionWeights:
    """Seeded initialization for tests; trained weights are external."""
    if stride_ratio < 1:
        raise ConfigError(f"stride ratio must be >= 1, got {stride_ratio}")
    if stride_ratio > 2 and stride_ratio % 2 == 0:
        strides = (stride_ratio // 2, 2)
    else:
        strides = (stride_ratio, 1)
    mid = max(proj_channels, depth_channels)
    proj = (
        _conv_init(rng, strides[0] + 2, strides[0] + 2, depth_channels, mid, strides[0]),
        _conv_init(rng, strides[1] + 2, strides[1] + 2, mid, mid, strides[1]),
        _conv_init(rng, 1, 1, mid, proj_channels),
    )
    mapper = _conv_init(rng, 1, 1, dino_channels + proj_channels, fused_channels)
    res = tuple(
        ResidualBlock(
            _conv_init(rng, 3, 3, fused_channels, fused_channels),
            _conv_init(rng, 3, 3, fused_channels, fused_channels),
        )
        for _ in range(blocks)
    )
    return FusionWeights(proj_convs=proj, fusion_mapper=mapper, fusion_blocks=res)
