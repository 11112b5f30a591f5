"""End-to-end single-pass inference and its two file formats: the flat
key-value config and the FMW1 weight container.

The forward path is fusion -> interaction -> matching -> propagation ->
bilinear x8 upsampling, each stage exactly once. There is deliberately
no loop anywhere in this module's call graph.
"""

from __future__ import annotations

import enum
import hashlib
import struct
import time
import zlib
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import core, fusion, matching, propagation
from .backend import BACKEND_NAME
from .errors import ConfigError, FormatError
from .features import FramePairBundle
from .flowio import FlowField
from .metrics import EvalReport, epe_report

FMW_MAGIC = b"FMW1"
FMW_VERSION = 1


class UpsampleMode(enum.Enum):
    BILINEAR_X8 = "BILINEAR_X8"


@dataclass(frozen=True)
class PipelineConfig:
    fusion_enabled: bool = True
    interaction_blocks: int = 0
    deterministic: bool = True
    correlation_cap: int = matching.DEFAULT_CORRELATION_CAP
    upsample_mode: UpsampleMode = UpsampleMode.BILINEAR_X8
    gamma: float = 0.9
    seed: int = 0
    dino_channels: int = 384
    depth_channels: int = 128
    proj_channels: int = 128
    feature_dim: int = 128
    ffn_channels: int = 256

    def validate(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.interaction_blocks < 0:
            raise ConfigError(
                f"interaction_blocks must be >= 0, got {self.interaction_blocks}"
            )
        if self.correlation_cap < 1:
            raise ConfigError(
                f"correlation_cap must be >= 1, got {self.correlation_cap}"
            )
        for name in ("dino_channels", "depth_channels", "proj_channels",
                     "feature_dim", "ffn_channels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.interaction_blocks > 0 and self.feature_dim % 4:
            raise ConfigError(
                "interaction blocks need feature_dim % 4 == 0 for the "
                f"positional encoding, got {self.feature_dim}"
            )


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, UpsampleMode):
        return value.value
    return repr(value) if isinstance(value, float) else str(value)


def write_config(cfg: PipelineConfig, path: str | Path) -> None:
    lines = [f"{f.name} = {_format_value(getattr(cfg, f.name))}" for f in fields(cfg)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_config(path: str | Path) -> PipelineConfig:
    """Parse the flat `key = value` config; unknown keys are rejected."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    known = {f.name for f in fields(PipelineConfig)}
    values: dict[str, object] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {raw!r}")
        key, _, text = (part.strip() for part in line.partition("="))
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, text, lineno, path)
    cfg = PipelineConfig(**values)
    cfg.validate()
    return cfg


def _parse_value(key: str, text: str, lineno: int, path: Path):
    kind = {
        "fusion_enabled": bool, "deterministic": bool,
        "gamma": float,
        "upsample_mode": UpsampleMode,
    }.get(key, int)
    try:
        if kind is bool:
            if text not in ("true", "false"):
                raise ValueError("expected true or false")
            return text == "true"
        if kind is UpsampleMode:
            return UpsampleMode(text)
        return kind(text)
    except ValueError as exc:
        raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None


@dataclass(frozen=True)
class ModelWeights:
    fusion: fusion.FusionWeights
    interaction: matching.InteractionWeights

    def validate_against(self, cfg: PipelineConfig) -> None:
        fw = self.fusion
        checks = (
            ("proj.0.kernel input channels", fw.proj_in_channels, cfg.depth_channels),
            (f"proj.{len(fw.proj_convs) - 1}.kernel output channels",
             fw.proj_out_channels, cfg.proj_channels),
            ("fuse.mapper.kernel input channels", fw.fusion_mapper.cin,
             cfg.dino_channels + cfg.proj_channels),
            ("fuse.mapper.kernel output channels", fw.fused_channels, cfg.feature_dim),
            ("interact block count", len(self.interaction.blocks),
             cfg.interaction_blocks),
        )
        for name, have, want in checks:
            if have != want:
                raise ConfigError(f"{name}: weights have {have}, config wants {want}")
        if self.interaction.blocks and self.interaction.width != cfg.feature_dim:
            raise ConfigError(
                f"interact.block0.self.wq: weights are {self.interaction.width}-wide, "
                f"config wants {cfg.feature_dim}"
            )


def _to_tensors(weights: ModelWeights) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for i, conv in enumerate(weights.fusion.proj_convs):
        out[f"proj.{i}.kernel"] = conv.kernel
        out[f"proj.{i}.bias"] = conv.bias
        out[f"proj.{i}.stride"] = np.array([conv.stride], dtype=np.float32)
    out["fuse.mapper.kernel"] = weights.fusion.fusion_mapper.kernel
    out["fuse.mapper.bias"] = weights.fusion.fusion_mapper.bias
    for i, block in enumerate(weights.fusion.fusion_blocks):
        for j, conv in ((1, block.conv1), (2, block.conv2)):
            out[f"fuse.block{i}.conv{j}.kernel"] = conv.kernel
            out[f"fuse.block{i}.conv{j}.bias"] = conv.bias
    for i, block in enumerate(weights.interaction.blocks):
        for part, attn in (("self", block.self_attn), ("cross", block.cross_attn)):
            for name in ("wq", "wk", "wv", "wo"):
                out[f"interact.block{i}.{part}.{name}"] = getattr(attn, name)
        for name in ("w1", "b1", "w2", "b2"):
            out[f"interact.block{i}.ffn.{name}"] = getattr(block.ffn, name)
    return out


def _take(tensors: dict[str, np.ndarray], name: str, ndim: int) -> np.ndarray:
    if name not in tensors:
        raise ConfigError(f"{name}: missing from the weight file")
    t = tensors.pop(name)
    if t.ndim != ndim:
        raise ConfigError(f"{name}: expected {ndim}-D tensor, file has {t.ndim}-D")
    return t


def _from_tensors(tensors: dict[str, np.ndarray], cfg: PipelineConfig) -> ModelWeights:
    tensors = dict(tensors)
    proj = []
    while f"proj.{len(proj)}.kernel" in tensors:
        i = len(proj)
        stride_t = _take(tensors, f"proj.{i}.stride", 1)
        proj.append(
            fusion.ConvLayer(
                kernel=_take(tensors, f"proj.{i}.kernel", 4),
                bias=_take(tensors, f"proj.{i}.bias", 1),
                stride=int(round(float(stride_t[0]))),
            )
        )
    if not proj:
        raise ConfigError("proj.0.kernel: missing from the weight file")
    mapper = fusion.ConvLayer(
        kernel=_take(tensors, "fuse.mapper.kernel", 4),
        bias=_take(tensors, "fuse.mapper.bias", 1),
    )
    blocks = []
    while f"fuse.block{len(blocks)}.conv1.kernel" in tensors:
        i = len(blocks)
        blocks.append(
            fusion.ResidualBlock(
                conv1=fusion.ConvLayer(
                    kernel=_take(tensors, f"fuse.block{i}.conv1.kernel", 4),
                    bias=_take(tensors, f"fuse.block{i}.conv1.bias", 1),
                ),
                conv2=fusion.ConvLayer(
                    kernel=_take(tensors, f"fuse.block{i}.conv2.kernel", 4),
                    bias=_take(tensors, f"fuse.block{i}.conv2.bias", 1),
                ),
            )
        )
    iblocks = []
    while f"interact.block{len(iblocks)}.self.wq" in tensors:
        i = len(iblocks)
        attns = {}
        for part in ("self", "cross"):
            attns[part] = matching.AttentionWeights(
                *(_take(tensors, f"interact.block{i}.{part}.{name}", 2)
                  for name in ("wq", "wk", "wv", "wo"))
            )
        iblocks.append(
            matching.InteractionBlock(
                self_attn=attns["self"],
                cross_attn=attns["cross"],
                ffn=matching.FeedForwardWeights(
                    w1=_take(tensors, f"interact.block{i}.ffn.w1", 2),
                    b1=_take(tensors, f"interact.block{i}.ffn.b1", 1),
                    w2=_take(tensors, f"interact.block{i}.ffn.w2", 2),
                    b2=_take(tensors, f"interact.block{i}.ffn.b2", 1),
                ),
            )
        )
    if tensors:
        raise ConfigError(f"{sorted(tensors)[0]}: unexpected tensor in the weight file")
    weights = ModelWeights(
        fusion=fusion.FusionWeights(
            proj_convs=tuple(proj), fusion_mapper=mapper, fusion_blocks=tuple(blocks)
        ),
        interaction=matching.InteractionWeights(blocks=tuple(iblocks)),
    )
    weights.validate_against(cfg)
    return weights


def save_weights(weights: ModelWeights, path: str | Path) -> None:
    """FMW1 container: per tensor, a name, dims, f32 payload, and CRC32."""
    tensors = _to_tensors(weights)
    with open(path, "wb") as fp:
        fp.write(FMW_MAGIC)
        fp.write(struct.pack("<BBBB", FMW_VERSION, 0, 0, 0))
        fp.write(struct.pack("<I", len(tensors)))
        for name, tensor in tensors.items():
            encoded = name.encode("utf-8")
            payload = np.ascontiguousarray(tensor, dtype="<f4").tobytes()
            fp.write(struct.pack("<H", len(encoded)))
            fp.write(encoded)
            fp.write(struct.pack("<B", tensor.ndim))
            fp.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fp.write(payload)
            fp.write(struct.pack("<I", zlib.crc32(payload)))


def _read_tensor_table(raw: bytes, path: Path) -> dict[str, np.ndarray]:
    if len(raw) < 12:
        raise FormatError(f"{path}: weight file shorter than its header",
                          offset=len(raw))
    if raw[0:4] != FMW_MAGIC:
        raise ConfigError(f"{path}: not a model weight file (bad magic)")
    version = raw[4]
    if version != FMW_VERSION:
        raise ConfigError(f"{path}: unsupported weight file version {version}")
    (count,) = struct.unpack_from("<I", raw, 8)
    pos = 12
    tensors: dict[str, np.ndarray] = {}

    def need(nbytes: int, what: str) -> None:
        if pos + nbytes > len(raw):
            raise FormatError(f"{path}: truncated while reading {what}", offset=pos)

    for _ in range(count):
        need(2, "a tensor name length")
        (namelen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        need(namelen, "a tensor name")
        name = raw[pos : pos + namelen].decode("utf-8")
        pos += namelen
        need(1, f"{name}: rank")
        ndim = raw[pos]
        pos += 1
        need(4 * ndim, f"{name}: dims")
        dims = struct.unpack_from(f"<{ndim}I", raw, pos)
        pos += 4 * ndim
        size = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        need(4 * size, f"{name}: payload")
        payload = raw[pos : pos + 4 * size]
        pos += 4 * size
        need(4, f"{name}: checksum")
        (crc,) = struct.unpack_from("<I", raw, pos)
        if crc != zlib.crc32(payload):
            raise FormatError(f"{path}: {name}: payload CRC mismatch", offset=pos)
        pos += 4
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    return tensors


def load_weights(path: str | Path, cfg: PipelineConfig) -> ModelWeights:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"weight file not found: {path}")
    return _from_tensors(_read_tensor_table(path.read_bytes(), path), cfg)


def weight_file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def make_random_weights(cfg: PipelineConfig, stride_ratio: int = 1) -> ModelWeights:
    """Seeded random weights matching the config's widths (for tests and
    demos; trained weights are produced elsewhere)."""
    rng = np.random.default_rng(cfg.seed)
    fw = fusion.random_fusion_weights(
        rng,
        depth_channels=cfg.depth_channels,
        proj_channels=cfg.proj_channels,
        dino_channels=cfg.dino_channels,
        fused_channels=cfg.feature_dim,
        stride_ratio=stride_ratio,
    )
    iw = matching.random_interaction_weights(
        rng, cfg.feature_dim, cfg.interaction_blocks, cfg.ffn_channels
    )
    return ModelWeights(fusion=fw, interaction=iw)


def upsample_flow(flow_low: np.ndarray, image_h: int, image_w: int) -> np.ndarray:
    """Bilinear resize to image resolution, scaling each component by
    its resolution ratio."""
    h, w, _ = flow_low.shape
    up = core.bilinear_resize(flow_low, image_h, image_w)
    out = np.empty_like(up)
    np.multiply(up[..., 0], image_w / w, out=out[..., 0])
    np.multiply(up[..., 1], image_h / h, out=out[..., 1])
    return out


@dataclass(frozen=True)
class InferenceResult:
    flow_full: FlowField
    flow_raw_full: FlowField
    flow_raw: np.ndarray
    flow_prop: np.ndarray
    timings: dict[str, float]

    def predictions(self) -> list[FlowField]:
        """The loss module's N=2 predictions, intermediate first."""
        return [self.flow_raw_full, self.flow_full]


def infer(
    bundle: FramePairBundle,
    weights: ModelWeights | None,
    cfg: PipelineConfig,
) -> InferenceResult:
    """One forward pass over a frame pair; no refinement loop exists."""
    cfg.validate()
    if weights is not None:
        weights.validate_against(cfg)
    elif cfg.fusion_enabled or cfg.interaction_blocks:
        raise ConfigError(
            "weights are required when fusion or interaction is enabled"
        )
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    fused = fusion.fusion_enabled_toggle(
        bundle, weights.fusion if weights else None, cfg.fusion_enabled
    )
    timings["fusion_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    f1, f2 = matching.interact(
        fused.f1_hat, fused.f2_hat,
        weights.interaction if weights else matching.InteractionWeights(),
        deterministic=cfg.deterministic,
    )
    timings["interaction_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    matched = matching.match_pair(
        f1, f2, cap=cfg.correlation_cap, deterministic=cfg.deterministic
    )
    timings["matching_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    propagated = propagation.propagate_field(
        f1, matched.flow_raw, deterministic=cfg.deterministic
    )
    timings["propagation_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    raw_full = upsample_flow(matched.flow_raw, bundle.image_h, bundle.image_w)
    prop_full = upsample_flow(propagated.flow_prop, bundle.image_h, bundle.image_w)
    timings["upsample_s"] = time.perf_counter() - t0

    return InferenceResult(
        flow_full=FlowField(prop_full),
        flow_raw_full=FlowField(raw_full),
        flow_raw=matched.flow_raw,
        flow_prop=propagated.flow_prop,
        timings=timings,
    )


def evaluate_bundle(
    bundle: FramePairBundle,
    weights: ModelWeights | None,
    cfg: PipelineConfig,
) -> tuple[EvalReport, InferenceResult]:
    """Infer and score against the bundle's ground truth, stamping the
    run configuration into the report provenance."""
    if bundle.gt is None:
        raise ConfigError("bundle has no ground-truth flow to evaluate against")
    result = infer(bundle, weights, cfg)
    provenance = {
        "fusion_enabled": _format_value(cfg.fusion_enabled),
        "interaction_blocks": str(cfg.interaction_blocks),
        "deterministic": _format_value(cfg.deterministic),
        "backend": BACKEND_NAME,
    }
    report = epe_report(result.flow_full, bundle.gt, provenance=provenance)
    return report, result


def config_snapshot(cfg: PipelineConfig) -> dict[str, str]:
    return {k: _format_value(v) for k, v in asdict(cfg).items()}
