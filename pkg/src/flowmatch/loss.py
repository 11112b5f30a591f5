"""Weighted multi-prediction L1 flow loss, and an analytic-vs-numeric
gradient check of the matching chain.

The chain under test is the interaction-free forward path: correlation,
matching distribution, expectation, raw flow, self-affinity propagation,
then the weighted L1 loss against both predictions. Its backward pass is
hand-derived (softmax Jacobian plus linear algebra) and checked against
central finite differences in 64-bit mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import matching, propagation
from .errors import (
    ConfigError,
    DimensionError,
    NumericError,
    UndefinedLossError,
)
from .flowio import FlowField

GRADCHECK_MAX_CELLS = 36


@dataclass(frozen=True)
class LossReport:
    """Total loss and the (weight, raw L1) decomposition per prediction."""

    total: float
    per_prediction: tuple[tuple[float, float], ...]
    n: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_prediction", tuple(self.per_prediction))
        recomputed = math.fsum(w * raw for w, raw in self.per_prediction)
        if abs(recomputed - self.total) > 1e-9:
            raise NumericError(
                f"loss total {self.total!r} disagrees with its decomposition "
                f"{recomputed!r}"
            )


def flow_loss(
    preds: Sequence[FlowField],
    gt: FlowField,
    gamma: float = 0.9,
    valid_mask: np.ndarray | None = None,
) -> LossReport:
    """Per-pixel |du| + |dv| averaged over valid pixels, one term per
    prediction, weighted gamma^(N-i) so the final prediction weighs 1."""
    if not preds:
        raise DimensionError("need at least one prediction")
    if not 0.0 < gamma <= 1.0:
        raise ConfigError(f"gamma must be in (0, 1], got {gamma}")
    valid = gt.valid_mask()
    if valid_mask is not None:
        mask = np.asarray(valid_mask, dtype=bool)
        if mask.shape != valid.shape:
            raise DimensionError(
                f"valid mask {mask.shape} does not match flow extent {valid.shape}"
            )
        valid = valid & mask
    for k, pred in enumerate(preds):
        if pred.data.shape != gt.data.shape:
            raise DimensionError(
                f"prediction {k} extent {pred.data.shape} does not match "
                f"ground truth {gt.data.shape}"
            )
        valid = valid & pred.valid_mask()
    count = int(valid.sum())
    if count == 0:
        raise UndefinedLossError("no valid pixels; the loss is undefined")

    n = len(preds)
    terms = []
    for i, pred in enumerate(preds, start=1):
        diff = pred.data.astype(np.float64) - gt.data.astype(np.float64)
        l1 = np.abs(diff).sum(axis=2)[valid]
        raw = math.fsum(l1.tolist()) / count
        terms.append((gamma ** (n - i), raw))
    total = math.fsum(w * raw for w, raw in terms)
    return LossReport(total=total, per_prediction=tuple(terms), n=n)


def _softmax_backward(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    # Row-wise Jacobian-vector product: dlogits = P * (dP - sum(dP * P)).
    inner = (dprobs * probs).sum(axis=1, keepdims=True)
    return probs * (dprobs - inner)


def chain_loss(
    f1: np.ndarray, f2: np.ndarray, gt_cells: np.ndarray, gamma: float = 0.9
) -> float:
    """Forward value of the matching chain at cell resolution."""
    grid = matching.make_coord_grid(f1.shape[0], f1.shape[1], dtype=f1.dtype)
    corr = matching.correlation(f1, f2)
    match = matching.match_distribution(corr)
    _, flow_raw = matching.expected_flow(match, grid)
    attn = propagation.self_affinity(f1)
    flow_prop = propagation.propagate(attn, flow_raw)
    report = flow_loss(
        [FlowField(flow_raw), FlowField(flow_prop)], FlowField(gt_cells), gamma=gamma
    )
    return report.total


def chain_gradients(
    f1: np.ndarray, f2: np.ndarray, gt_cells: np.ndarray, gamma: float = 0.9
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss value and hand-derived dL/dF1, dL/dF2 for the chain."""
    h, w, d = f1.shape
    n = h * w
    scale = 1.0 / math.sqrt(d)
    x1 = f1.reshape(n, d).astype(np.float64)
    x2 = f2.reshape(n, d).astype(np.float64)
    grid = matching.make_coord_grid(h, w, dtype=np.float64).reshape(n, 2)
    gt = gt_cells.reshape(n, 2).astype(np.float64)

    corr = scale * (x1 @ x2.T)
    match = _softmax_rows(corr)
    flow_raw = match @ grid - grid
    sim = scale * (x1 @ x1.T)
    attn = _softmax_rows(sim)
    flow_prop = attn @ flow_raw

    w_raw, w_prop = gamma, 1.0
    loss = (
        w_raw * np.abs(flow_raw - gt).sum(axis=1).mean()
        + w_prop * np.abs(flow_prop - gt).sum(axis=1).mean()
    )

    d_prop = (w_prop / n) * np.sign(flow_prop - gt)
    d_raw = (w_raw / n) * np.sign(flow_raw - gt) + attn.T @ d_prop
    d_attn = d_prop @ flow_raw.T
    d_match = d_raw @ grid.T
    d_corr = _softmax_backward(match, d_match)
    d_sim = _softmax_backward(attn, d_attn)
    d_x1 = scale * (d_corr @ x2 + (d_sim + d_sim.T) @ x1)
    d_x2 = scale * (d_corr.T @ x1)
    if not (np.isfinite(d_x1).all() and np.isfinite(d_x2).all()):
        raise NumericError("analytic gradient is non-finite")
    return float(loss), d_x1.reshape(h, w, d), d_x2.reshape(h, w, d)


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def finite_difference_gradients(
    f1: np.ndarray, f2: np.ndarray, gt_cells: np.ndarray,
    eps: float, gamma: float = 0.9,
) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of chain_loss with step eps, per element."""
    outs = []
    for which in (0, 1):
        base = (f1, f2)[which].astype(np.float64)
        grad = np.zeros_like(base)
        flat = base.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            args = (base, f2) if which == 0 else (f1, base)
            hi = chain_loss(args[0], args[1], gt_cells, gamma)
            flat[i] = orig - eps
            lo = chain_loss(args[0], args[1], gt_cells, gamma)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        outs.append(grad)
    return outs[0], outs[1]


def _relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(float(np.abs(a).max()), float(np.abs(b).max()), 1e-12)
    return float(np.abs(a - b).max()) / denom


def gradcheck_matching_chain(
    f1: np.ndarray, f2: np.ndarray, gt_cells: np.ndarray,
    eps: float = 1e-5, gamma: float = 0.9,
) -> float:
    """Max relative error between analytic and central-difference
    gradients, over both feature tensors. 64-bit, desk-scale inputs."""
    h, w, _ = f1.shape
    if h * w > GRADCHECK_MAX_CELLS:
        raise DimensionError(
            f"gradient check is desk-scale only: {h * w} cells > {GRADCHECK_MAX_CELLS}"
        )
    f1 = f1.astype(np.float64)
    f2 = f2.astype(np.float64)
    gt_cells = gt_cells.astype(np.float64)
    _, a1, a2 = chain_gradients(f1, f2, gt_cells, gamma)
    n1, n2 = finite_difference_gradients(f1, f2, gt_cells, eps, gamma)
    return max(_relative_error(a1, n1), _relative_error(a2, n2))


def draw_gradcheck_case(
    seed: int, kink_margin: float = 1e-3
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded random (F1, F2, gt) for the gradient check, resampled until
    every per-pixel residual is at least kink_margin from the L1 kink."""
    for attempt in range(64):
        rng = np.random.default_rng(seed * 1009 + attempt)
        h = int(rng.integers(2, 7))
        w = int(rng.integers(2, 7))
        while h * w > GRADCHECK_MAX_CELLS:
            w -= 1
        d = int(rng.integers(3, 7))
        f1 = rng.standard_normal((h, w, d))
        f2 = rng.standard_normal((h, w, d))
        gt = rng.uniform(-2.0, 2.0, size=(h, w, 2))
        grid = matching.make_coord_grid(h, w, dtype=np.float64)
        corr = matching.correlation(f1, f2)
        _, flow_raw = matching.expected_flow(matching.match_distribution(corr), grid)
        attn = propagation.self_affinity(f1)
        flow_prop = propagation.propagate(attn, flow_raw)
        margins = np.minimum(np.abs(flow_raw - gt), np.abs(flow_prop - gt))
        if margins.min() > kink_margin:
            return f1, f2, gt
    raise NumericError(f"no kink-free draw found for seed {seed}")
