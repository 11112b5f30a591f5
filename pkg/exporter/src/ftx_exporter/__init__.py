"""Feature exporter for the flow matching engine.

Runs frozen DINOv2 and Depth-Anything checkpoints on a frame pair and
writes the four FTX feature records the engine consumes, plus a
manifest recording checkpoint digests and the resize policy.
"""

from .backbones import (
    checkpoint_digest,
    depth_decoder_features,
    dino_grid_features,
    load_depth,
    load_dino,
    verify_digest,
)
from .errors import (
    CheckpointError,
    ConfigError,
    ExportError,
    ImageError,
    ShapeError,
)
from .export import EXPORTER_VERSION, ExportJob, ExportResult, export_pair
from .resize import DECLARED_STRIDE, PATCH, RESIZE_POLICY, GridPlan, plan_grid

__version__ = EXPORTER_VERSION

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DECLARED_STRIDE",
    "ExportError",
    "ExportJob",
    "ExportResult",
    "GridPlan",
    "ImageError",
    "PATCH",
    "RESIZE_POLICY",
    "ShapeError",
    "checkpoint_digest",
    "depth_decoder_features",
    "dino_grid_features",
    "export_pair",
    "load_depth",
    "load_dino",
    "plan_grid",
    "verify_digest",
]
