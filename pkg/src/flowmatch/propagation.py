"""Flow propagation: intra-frame self-similarity attention applied once
to the raw flow, spreading confident estimates into ambiguous regions.

Each propagated vector is a convex combination of raw vectors, so the
component-wise range of the flow field can never grow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import core, instrument
from .errors import DimensionError, NumericError


def self_affinity(f1: np.ndarray, deterministic: bool = True) -> np.ndarray:
    """Row-stochastic attention from scaled intra-frame dot products."""
    if f1.ndim != 3:
        raise DimensionError(f"features must be (h, w, d), got {f1.shape}")
    h, w, d = f1.shape
    flat = f1.reshape(h * w, d)
    attn = core.matmul_blocked(flat, flat.T, deterministic=deterministic)
    np.multiply(attn, 1.0 / math.sqrt(d), out=attn)
    return core.softmax_lastdim(attn)


def propagate(
    attn: np.ndarray, flow_raw: np.ndarray, deterministic: bool = True
) -> np.ndarray:
    """Mix raw flow vectors by attention weight, per component."""
    attn = np.asarray(attn)
    if attn.ndim != 2 or attn.shape[0] != attn.shape[1]:
        raise DimensionError(f"attention must be square, got {attn.shape}")
    if flow_raw.ndim != 3 or flow_raw.shape[2] != 2:
        raise DimensionError(f"flow must be (h, w, 2), got {flow_raw.shape}")
    h, w, _ = flow_raw.shape
    if attn.shape[0] != h * w:
        raise DimensionError(
            f"attention is {attn.shape[0]}-row but the flow has {h * w} cells"
        )
    sums = attn.sum(axis=1, dtype=np.float64)
    worst = float(np.abs(sums - 1.0).max()) if sums.size else 0.0
    if worst > 1e-4:
        raise NumericError(f"attention rows must be stochastic, off by {worst:.3e}")
    flat = core.matmul_blocked(
        attn, flow_raw.reshape(h * w, 2).astype(attn.dtype), deterministic=deterministic
    )
    return flat.reshape(h, w, 2)


@dataclass(frozen=True)
class PropagationResult:
    attn: np.ndarray
    flow_prop: np.ndarray


def propagate_field(
    f1: np.ndarray, flow_raw: np.ndarray, deterministic: bool = True
) -> PropagationResult:
    """Full propagation stage: affinity then one mixing application."""
    instrument.record("propagation")
    attn = self_affinity(f1, deterministic=deterministic)
    flow_prop = propagate(attn, flow_raw, deterministic=deterministic)
    lo = flow_raw.min(axis=(0, 1))
    hi = flow_raw.max(axis=(0, 1))
    if (flow_prop < lo - 1e-6).any() or (flow_prop > hi + 1e-6).any():
        raise NumericError("propagated flow left the raw flow's component range")
    return PropagationResult(attn=attn, flow_prop=flow_prop)
