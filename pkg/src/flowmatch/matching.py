"""Global matching: optional transformer interaction, all-pairs
correlation, row-stochastic matching distribution, and expected
correspondences yielding raw flow.

Flattening order for the (hw x hw) matrices is row-major over (y, x);
grid coordinates are stored (x, y). These conventions are normative for
every fixture downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import core, instrument
from .errors import ConfigError, DimensionError, NumericError, ResourceLimitError
from .fusion import gelu

# Cells at matching resolution (hw), not matrix entries; 160x96 cells
# means a ~2.4e8-entry correlation matrix, the desk-scale safety limit.
DEFAULT_CORRELATION_CAP = 160 * 96


def make_coord_grid(h: int, w: int, dtype=np.float32) -> np.ndarray:
    """(h, w, 2) grid of cell coordinates with grid[i, j] == (j, i)."""
    if h < 1 or w < 1:
        raise DimensionError(f"grid extents must be positive, got {h}x{w}")
    grid = np.empty((h, w, 2), dtype=dtype)
    grid[..., 0] = np.arange(w, dtype=dtype)[None, :]
    grid[..., 1] = np.arange(h, dtype=dtype)[:, None]
    return grid


def positional_encoding_2d(h: int, w: int, d: int, dtype=np.float32) -> np.ndarray:
    """Fixed sinusoidal encoding, half the channels per axis."""
    if d % 4:
        raise ConfigError(f"positional encoding needs width % 4 == 0, got {d}")
    quarter = d // 4
    freqs = 1.0 / (10000.0 ** (np.arange(quarter, dtype=np.float64) / quarter))
    xs = np.arange(w, dtype=np.float64)[:, None] * freqs[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None] * freqs[None, :]
    pe = np.empty((h, w, d), dtype=dtype)
    pe[..., 0 * quarter : 1 * quarter] = np.sin(xs)[None, :, :]
    pe[..., 1 * quarter : 2 * quarter] = np.cos(xs)[None, :, :]
    pe[..., 2 * quarter : 3 * quarter] = np.sin(ys)[:, None, :]
    pe[..., 3 * quarter : 4 * quarter] = np.cos(ys)[:, None, :]
    return pe


def _square(name: str, m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got {m.shape}")
    return m


@dataclass(frozen=True)
class AttentionWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.wq).shape[0]
        for name in ("wq", "wk", "wv", "wo"):
            m = np.ascontiguousarray(getattr(self, name), dtype=np.float32)
            if m.shape != (d, d):
                raise ConfigError(f"attention {name} must be ({d}, {d}), got {m.shape}")
            if not np.isfinite(m).all():
                raise NumericError(f"attention {name} contains non-finite values")
            m.flags.writeable = False
            object.__setattr__(self, name, m)


@dataclass(frozen=True)
class FeedForwardWeights:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        w1 = np.ascontiguousarray(self.w1, dtype=np.float32)
        w2 = np.ascontiguousarray(self.w2, dtype=np.float32)
        b1 = np.ascontiguousarray(self.b1, dtype=np.float32)
        b2 = np.ascontiguousarray(self.b2, dtype=np.float32)
        if w1.ndim != 2 or w2.shape != (w1.shape[1], w1.shape[0]):
            raise ConfigError(
                f"feedforward widths disagree: w1 {w1.shape}, w2 {w2.shape}"
            )
        if b1.shape != (w1.shape[1],) or b2.shape != (w1.shape[0],):
            raise ConfigError("feedforward bias widths disagree with the weights")
        for name, m in (("w1", w1), ("b1", b1), ("w2", w2), ("b2", b2)):
            if not np.isfinite(m).all():
                raise NumericError(f"feedforward {name} contains non-finite values")
            m.flags.writeable = False
            object.__setattr__(self, name, m)


@dataclass(frozen=True)
class InteractionBlock:
    self_attn: AttentionWeights
    cross_attn: AttentionWeights
    ffn: FeedForwardWeights


@dataclass(frozen=True)
class InteractionWeights:
    blocks: tuple[InteractionBlock, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def width(self) -> int:
        return self.blocks[0].self_attn.wq.shape[0] if self.blocks else 0


def _attention(
    q_in: np.ndarray, kv_in: np.ndarray, w: AttentionWeights, deterministic: bool
) -> np.ndarray:
    d = q_in.shape[1]
    q = core.matmul_blocked(q_in, w.wq, deterministic=deterministic)
    k = core.matmul_blocked(kv_in, w.wk, deterministic=deterministic)
    v = core.matmul_blocked(kv_in, w.wv, deterministic=deterministic)
    scores = core.matmul_blocked(q, k.T, deterministic=deterministic)
    np.multiply(scores, 1.0 / math.sqrt(d), out=scores)
    probs = core.softmax_lastdim(scores)
    mixed = core.matmul_blocked(probs, v, deterministic=deterministic)
    return core.matmul_blocked(mixed, w.wo, deterministic=deterministic)


def _feedforward(x: np.ndarray, w: FeedForwardWeights, deterministic: bool) -> np.ndarray:
    hidden = gelu(core.matmul_blocked(x, w.w1, deterministic=deterministic) + w.b1)
    return core.matmul_blocked(hidden, w.w2, deterministic=deterministic) + w.b2


def interact(
    f1_hat: np.ndarray,
    f2_hat: np.ndarray,
    weights: InteractionWeights,
    deterministic: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-block: self-attention, cross-frame attention, feedforward; all
    residual, single-head, frame-symmetric. Positional encodings are
    added once before block 1; zero blocks returns the inputs unchanged.
    """
    if f1_hat.shape != f2_hat.shape:
        raise DimensionError(
            f"frames must share a shape, got {f1_hat.shape} vs {f2_hat.shape}"
        )
    if not weights.blocks:
        return f1_hat, f2_hat
    h, w, d = f1_hat.shape
    if weights.width != d:
        raise ConfigError(
            f"interaction weights are {weights.width}-wide, features are {d}-wide"
        )
    pe = positional_encoding_2d(h, w, d, dtype=f1_hat.dtype)
    x1 = (f1_hat + pe).reshape(h * w, d)
    x2 = (f2_hat + pe).reshape(h * w, d)
    for block in weights.blocks:
        x1 = x1 + _attention(x1, x1, block.self_attn, deterministic)
        x2 = x2 + _attention(x2, x2, block.self_attn, deterministic)
        # Cross updates read the pre-update pair so frame order is symmetric.
        c1 = x1 + _attention(x1, x2, block.cross_attn, deterministic)
        c2 = x2 + _attention(x2, x1, block.cross_attn, deterministic)
        x1 = c1 + _feedforward(c1, block.ffn, deterministic)
        x2 = c2 + _feedforward(c2, block.ffn, deterministic)
    return x1.reshape(h, w, d), x2.reshape(h, w, d)


def correlation(
    f1: np.ndarray,
    f2: np.ndarray,
    cap: int = DEFAULT_CORRELATION_CAP,
    deterministic: bool = True,
) -> np.ndarray:
    """All-pairs similarity: corr[p, q] = <F1_p, F2_q> / sqrt(D)."""
    if f1.ndim != 3 or f1.shape != f2.shape:
        raise DimensionError(
            f"correlation needs matching (h, w, d) maps, got {f1.shape} vs {f2.shape}"
        )
    h, w, d = f1.shape
    n = h * w
    if n > cap:
        raise ResourceLimitError(
            f"{h}x{w} grid has {n} cells ({n}x{n} = {n * n} correlation entries), "
            f"over the {cap}-cell cap; raise correlation_cap in the pipeline "
            "config to override"
        )
    corr = core.matmul_blocked(
        f1.reshape(n, d), f2.reshape(n, d).T, deterministic=deterministic
    )
    np.multiply(corr, 1.0 / math.sqrt(d), out=corr)
    return corr


def match_distribution(corr: np.ndarray) -> np.ndarray:
    """Row-wise softmax over all candidate correspondences."""
    return core.softmax_lastdim(_square("correlation matrix", corr))


def expected_flow(
    match: np.ndarray, grid: np.ndarray, deterministic: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Probability-weighted target coordinates and their offsets."""
    match = _square("matching distribution", match)
    if grid.ndim != 3 or grid.shape[2] != 2:
        raise DimensionError(f"grid must be (h, w, 2), got {grid.shape}")
    h, w, _ = grid.shape
    if match.shape[0] != h * w:
        raise DimensionError(
            f"distribution is {match.shape[0]}-row but the grid has {h * w} cells"
        )
    flat = core.matmul_blocked(
        match, grid.reshape(h * w, 2).astype(match.dtype), deterministic=deterministic
    )
    expected = flat.reshape(h, w, 2)
    return expected, expected - grid.astype(match.dtype)


@dataclass(frozen=True)
class MatchingResult:
    corr: np.ndarray
    match: np.ndarray
    expected: np.ndarray
    flow_raw: np.ndarray

    def __post_init__(self) -> None:
        n = self.match.shape[0]
        sums = self.match.sum(axis=1, dtype=np.float64)
        worst = float(np.abs(sums - 1.0).max()) if n else 0.0
        if worst > 1e-6:
            raise NumericError(f"matching rows sum to 1 +/- {worst:.3e}, over 1e-6")
        h, w, _ = self.expected.shape
        ex, ey = self.expected[..., 0], self.expected[..., 1]
        if (
            ex.min() < -1e-4 or ex.max() > w - 1 + 1e-4
            or ey.min() < -1e-4 or ey.max() > h - 1 + 1e-4
        ):
            raise NumericError("expected coordinates left the grid hull")


def match_pair(
    f1: np.ndarray,
    f2: np.ndarray,
    grid: np.ndarray | None = None,
    cap: int = DEFAULT_CORRELATION_CAP,
    deterministic: bool = True,
) -> MatchingResult:
    """Full matcher stage: correlation, distribution, expectation."""
    instrument.record("matcher")
    if grid is None:
        grid = make_coord_grid(f1.shape[0], f1.shape[1], dtype=f1.dtype)
    corr = correlation(f1, f2, cap=cap, deterministic=deterministic)
    match = match_distribution(corr)
    expected, flow_raw = expected_flow(match, grid, deterministic=deterministic)
    return MatchingResult(corr=corr, match=match, expected=expected, flow_raw=flow_raw)


def _attn_square(rng: np.random.Generator, d: int) -> np.ndarray:
    return rng.normal(0.0, 1.0 / math.sqrt(d), size=(d, d)).astype(np.float32)


def random_interaction_weights(
    rng: np.random.Generator, d: int, blocks: int, ffn_width: int
) -> InteractionWeights:
    out = []
    for _ in range(blocks):
        out.append(
            InteractionBlock(
                self_attn=AttentionWeights(*(_attn_square(rng, d) for _ in range(4))),
                cross_attn=AttentionWeights(*(_attn_square(rng, d) for _ in range(4))),
                ffn=FeedForwardWeights(
                    w1=rng.normal(0.0, 1.0 / math.sqrt(d), (d, ffn_width)).astype(np.float32),
                    b1=np.zeros(ffn_width, dtype=np.float32),
                    w2=rng.normal(0.0, 1.0 / math.sqrt(ffn_width), (ffn_width, d)).astype(np.float32),
                    b2=np.zeros(d, dtype=np.float32),
                ),
            )
        )
    return InteractionWeights(blocks=tuple(out))
