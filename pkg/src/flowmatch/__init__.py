"""Single-forward-pass dense optical flow over exported backbone features.

Features from two frames are fused, matched globally through a scaled
softmax over all cell pairs, and the resulting raw flow is smoothed by
a self-similarity weighted propagation step. Kernels run on a compiled
extension when available and fall back to pure numpy otherwise.
"""

from .backend import BACKEND_NAME, thread_count
from .errors import (
    ConfigError,
    DimensionError,
    FlowMatchError,
    FormatError,
    NumericError,
    ResourceLimitError,
    UndefinedLossError,
    UndefinedMetricError,
)
from .features import (
    BUNDLE_FILES,
    BUNDLE_GT_FILE,
    FeatureRecord,
    FramePairBundle,
    Source,
    read_bundle,
    read_ftx,
    synth_shifted_pair,
    write_bundle,
    write_ftx,
)
from .flowio import (
    FlowField,
    read_flo,
    read_kitti_png,
    render_colorwheel,
    write_flo,
    write_kitti_png,
    write_png8,
)
from .loss import LossReport, flow_loss, gradcheck_matching_chain
from .matching import MatchingResult, match_pair
from .metrics import EvalReport, aggregate_reports, epe_report
from .pipeline import (
    InferenceResult,
    ModelWeights,
    PipelineConfig,
    evaluate_bundle,
    infer,
    load_weights,
    make_random_weights,
    read_config,
    save_weights,
    write_config,
)
from .propagation import PropagationResult, propagate_field

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "BUNDLE_FILES",
    "BUNDLE_GT_FILE",
    "ConfigError",
    "DimensionError",
    "EvalReport",
    "FeatureRecord",
    "FlowField",
    "FlowMatchError",
    "FormatError",
    "FramePairBundle",
    "InferenceResult",
    "LossReport",
    "MatchingResult",
    "ModelWeights",
    "NumericError",
    "PipelineConfig",
    "PropagationResult",
    "ResourceLimitError",
    "Source",
    "UndefinedLossError",
    "UndefinedMetricError",
    "aggregate_reports",
    "epe_report",
    "evaluate_bundle",
    "flow_loss",
    "gradcheck_matching_chain",
    "infer",
    "load_weights",
    "make_random_weights",
    "match_pair",
    "propagate_field",
    "read_bundle",
    "read_config",
    "read_flo",
    "read_ftx",
    "read_kitti_png",
    "render_colorwheel",
    "save_weights",
    "synth_shifted_pair",
    "thread_count",
    "write_bundle",
    "write_config",
    "write_flo",
    "write_ftx",
    "write_kitti_png",
    "write_png8",
]
