"""Dense-tensor kernels: matmul, stable softmax, conv2d, bilinear resize.

Tensors are numpy arrays, row-major, channel-last for feature maps.
Storage is float32 in normal operation; float64 arrays are accepted
everywhere for gradient checking. All accumulation is 64-bit regardless
of storage width. Every public kernel validates that its output is
finite; NaN/Inf is raised as an error, never returned.
"""

from __future__ import annotations

import numpy as np

from .backend import kernels, thread_count
from .errors import DimensionError, NumericError

_FLOAT_DTYPES = (np.float32, np.float64)


def _as_tensor(x: np.ndarray, name: str, ndim: int, contiguous: bool = True) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype not in _FLOAT_DTYPES:
        x = x.astype(np.float32)
    if x.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-D, got shape {x.shape}")
    return np.ascontiguousarray(x) if contiguous else x


def _check_finite(out: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(out).all():
        raise NumericError(f"{op} produced non-finite values")
    return out


def matmul_blocked(
    a: np.ndarray,
    b: np.ndarray,
    block: int = 64,
    deterministic: bool = True,
) -> np.ndarray:
    """Matrix product a @ b with 64-bit accumulation.

    With deterministic=True every output element is reduced in one fixed
    serial order, so results are bit-identical for any `block` value and
    any worker count. Otherwise `block` tiles the shared axis and partial
    products are accumulated per tile.
    """
    a = _as_tensor(a, "a", 2)
    # b is often a transposed view of a contiguous matrix; keep the view so
    # the b.T below costs nothing in that case.
    b = _as_tensor(b, "b", 2, contiguous=False)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dims disagree: {a.shape} @ {b.shape}")
    if block < 1:
        raise DimensionError(f"block must be >= 1, got {block}")
    b = b.astype(a.dtype, copy=False)

    if deterministic:
        bt = np.ascontiguousarray(b.T)
        out = kernels.matmul_nt(a, bt, thread_count())
    else:
        acc = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
        for k0 in range(0, a.shape[1], block):
            k1 = k0 + block
            acc += a[:, k0:k1].astype(np.float64) @ b[k0:k1].astype(np.float64)
        out = acc.astype(a.dtype)
    return _check_finite(out, "matmul_blocked")


def softmax_lastdim(x: np.ndarray) -> np.ndarray:
    """Softmax over the last axis with max-subtraction; slices sum to 1."""
    x = np.asarray(x)
    if x.dtype not in _FLOAT_DTYPES:
        x = x.astype(np.float32)
    if x.ndim < 1 or x.shape[-1] < 1:
        raise DimensionError(f"softmax needs a non-empty last axis, got shape {x.shape}")
    flat = np.ascontiguousarray(x.reshape(-1, x.shape[-1]), dtype=x.dtype).copy()
    kernels.softmax_rows_inplace(flat, thread_count())
    out = flat.reshape(x.shape)
    return _check_finite(out, "softmax_lastdim")


def conv2d(
    x: np.ndarray,
    w: np.ndarray,
    bias: np.ndarray | None = None,
    stride: int = 1,
    pad: int = 0,
) -> np.ndarray:
    """Zero-padded strided convolution, channel-last.

    Output extent (h + 2*pad - kh)/stride + 1 must divide exactly. In
    64-bit mode the per-element accumulation order is fixed (ky, kx, ci),
    identical across backends.
    """
    x = _as_tensor(x, "x", 3)
    w = _as_tensor(w, "w", 4).astype(x.dtype, copy=False)
    h, wid, cin = x.shape
    kh, kw, wcin, cout = w.shape
    if wcin != cin:
        raise DimensionError(f"kernel expects {wcin} input channels, input has {cin}")
    if stride < 1 or pad < 0:
        raise DimensionError(f"need stride >= 1 and pad >= 0, got {stride}, {pad}")
    if kh > h + 2 * pad or kw > wid + 2 * pad:
        raise DimensionError(
            f"{kh}x{kw} kernel does not fit {h}x{wid} input with pad {pad}"
        )
    if (h + 2 * pad - kh) % stride or (wid + 2 * pad - kw) % stride:
        raise DimensionError(
            f"{h}x{wid} input, {kh}x{kw} kernel, stride {stride}, pad {pad}: "
            "output extent is not integral"
        )
    if bias is None:
        bvec = np.zeros(cout, dtype=x.dtype)
    else:
        bvec = np.ascontiguousarray(np.asarray(bias), dtype=x.dtype)
        if bvec.shape != (cout,):
            raise DimensionError(f"bias must have shape ({cout},), got {bvec.shape}")
    out = kernels.conv2d(x, w, bvec, stride, pad, thread_count())
    return _check_finite(out, "conv2d")


def bilinear_resize(x: np.ndarray, h2: int, w2: int) -> np.ndarray:
    """Resize a channel-last map; output pixel centers (i+0.5)/len map
    linearly onto the source index range [0, srclen-1]. Constant inputs
    resize to the same constant exactly."""
    x = _as_tensor(x, "x", 3)
    if h2 < 1 or w2 < 1:
        raise DimensionError(f"target size must be positive, got {h2}x{w2}")
    out = kernels.bilinear_resize(x, h2, w2, thread_count())
    return _check_finite(out, "bilinear_resize")
