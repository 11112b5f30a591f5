"""Evaluation metrics: endpoint error, magnitude-stratified endpoint
error, and the KITTI outlier fraction.

Stratification intervals are half-open, [0,10), [10,40), [40,inf), and
all pixel sums use compensated 64-bit accumulation so reports are
independent of pixel order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, UndefinedMetricError
from .flowio import FlowField

STRATA_EDGES = (10.0, 40.0)


@dataclass(frozen=True)
class EvalReport:
    epe: float
    s0_10: float
    s10_40: float
    s40plus: float
    f1_all: float
    count_0_10: int
    count_10_40: int
    count_40plus: int
    valid_count: int
    provenance: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.count_0_10 + self.count_10_40 + self.count_40plus != self.valid_count:
            raise DimensionError("stratum counts must sum to the valid pixel count")
        if not 0.0 <= self.f1_all <= 100.0:
            raise DimensionError(f"F1-all must be a percentage, got {self.f1_all}")


def _mean(values: np.ndarray) -> float:
    return math.fsum(values.tolist()) / values.size if values.size else 0.0


def epe_report(
    pred: FlowField,
    gt: FlowField,
    provenance: dict[str, str] | None = None,
    gt_magnitude_cap: float | None = None,
) -> EvalReport:
    """Score a prediction against ground truth over valid pixels.

    `gt_magnitude_cap` optionally drops pixels whose true motion exceeds
    the cap (off by default).
    """
    if pred.data.shape != gt.data.shape:
        raise DimensionError(
            f"extent mismatch: prediction {pred.data.shape[:2]}, "
            f"ground truth {gt.data.shape[:2]}"
        )
    valid = pred.valid_mask() & gt.valid_mask()
    diff = pred.data.astype(np.float64) - gt.data.astype(np.float64)
    mag = np.sqrt((gt.data.astype(np.float64) ** 2).sum(axis=2))
    if gt_magnitude_cap is not None:
        valid = valid & (mag <= gt_magnitude_cap)
    if not valid.any():
        raise UndefinedMetricError("no valid pixels to evaluate")

    err = np.sqrt((diff ** 2).sum(axis=2))[valid]
    mag = mag[valid]
    lo, hi = STRATA_EDGES
    in_low = mag < lo
    in_mid = (mag >= lo) & (mag < hi)
    in_high = mag >= hi
    outlier = (err > 3.0) & (err > 0.05 * mag)
    n = int(valid.sum())
    return EvalReport(
        epe=_mean(err),
        s0_10=_mean(err[in_low]),
        s10_40=_mean(err[in_mid]),
        s40plus=_mean(err[in_high]),
        f1_all=100.0 * int(outlier.sum()) / n,
        count_0_10=int(in_low.sum()),
        count_10_40=int(in_mid.sum()),
        count_40plus=int(in_high.sum()),
        valid_count=n,
        provenance=dict(provenance or {}),
    )


def aggregate_reports(reports: list[EvalReport]) -> EvalReport:
    """Pixel-weighted combination of per-pair reports."""
    if not reports:
        raise UndefinedMetricError("no reports to aggregate")
    total = sum(r.valid_count for r in reports)
    if total == 0:
        raise UndefinedMetricError("aggregated reports cover zero pixels")

    def weighted(value, count):
        return math.fsum(v * c for v, c in zip(value, count))

    counts = {
        "count_0_10": sum(r.count_0_10 for r in reports),
        "count_10_40": sum(r.count_10_40 for r in reports),
        "count_40plus": sum(r.count_40plus for r in reports),
    }
    s0 = weighted((r.s0_10 for r in reports), (r.count_0_10 for r in reports))
    s1 = weighted((r.s10_40 for r in reports), (r.count_10_40 for r in reports))
    s2 = weighted((r.s40plus for r in reports), (r.count_40plus for r in reports))
    return EvalReport(
        epe=weighted((r.epe for r in reports), (r.valid_count for r in reports)) / total,
        s0_10=s0 / counts["count_0_10"] if counts["count_0_10"] else 0.0,
        s10_40=s1 / counts["count_10_40"] if counts["count_10_40"] else 0.0,
        s40plus=s2 / counts["count_40plus"] if counts["count_40plus"] else 0.0,
        f1_all=weighted((r.f1_all for r in reports), (r.valid_count for r in reports))
        / total,
        valid_count=total,
        **counts,
    )
