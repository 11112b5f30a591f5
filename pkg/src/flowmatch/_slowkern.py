"""Pure-NumPy kernel backend.

Fallback used when the compiled extension is unavailable (or forced via
FLOWMATCH_BACKEND=python). Matches the compiled backend's contracts:
64-bit accumulation, fixed reduction order per output element, results
independent of the worker-thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

NAME = "python"

# Row-tile extent for matmul. Fixed (never derived from the thread count)
# so tile boundaries, and therefore BLAS call shapes and result bits, do
# not change when FLOWMATCH_THREADS changes.
_ROW_TILE = 512


def matmul_nt(a: np.ndarray, bt: np.ndarray, nthreads: int = 1) -> np.ndarray:
    """Compute a @ bt.T with float64 accumulation; result in a's dtype."""
    m = a.shape[0]
    out = np.empty((m, bt.shape[0]), dtype=a.dtype)
    b64 = bt.astype(np.float64, copy=False).T

    def run_tile(i0: int) -> None:
        i1 = min(i0 + _ROW_TILE, m)
        block = a[i0:i1].astype(np.float64, copy=False) @ b64
        out[i0:i1] = block.astype(a.dtype)

    starts = range(0, m, _ROW_TILE)
    if nthreads > 1 and m > _ROW_TILE:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            list(pool.map(run_tile, starts))
    else:
        for i0 in starts:
            run_tile(i0)
    return out


def softmax_rows_inplace(x: np.ndarray, nthreads: int = 1) -> None:
    """Row-wise softmax with max-subtraction, 64-bit exp/sum, in place."""
    for i0 in range(0, x.shape[0], _ROW_TILE):
        rows = x[i0 : i0 + _ROW_TILE].astype(np.float64)
        rows -= rows.max(axis=1, keepdims=True)
        np.exp(rows, out=rows)
        rows /= rows.sum(axis=1, keepdims=True)
        x[i0 : i0 + _ROW_TILE] = rows.astype(x.dtype)


def conv2d(
    x: np.ndarray,
    w: np.ndarray,
    bias: np.ndarray | None,
    stride: int,
    pad: int,
    nthreads: int = 1,
) -> np.ndarray:
    h, wid, cin = x.shape
    kh, kw, _, cout = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wid + 2 * pad - kw) // stride + 1
    if x.dtype == np.float64:
        return _conv2d_exact(x, w, bias, stride, pad, oh, ow)

    if pad:
        x = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(0, 1))
    windows = windows[::stride, ::stride]  # (oh, ow, cin, kh, kw)
    patches = windows.transpose(0, 1, 3, 4, 2).reshape(oh * ow, kh * kw * cin)
    wmat = w.reshape(kh * kw * cin, cout)
    out = matmul_nt(np.ascontiguousarray(patches), np.ascontiguousarray(wmat.T), nthreads)
    if bias is not None:
        out = out + bias.astype(out.dtype)
    return out.reshape(oh, ow, cout)


def _conv2d_exact(x, w, bias, stride, pad, oh, ow):
    # Explicit loops in (ky, kx, ci) order: the normative accumulation
    # order for the bit-exact 64-bit mode. Desk-scale inputs only.
    h, wid, cin = x.shape
    kh, kw, _, cout = w.shape
    out = np.empty((oh, ow, cout), dtype=np.float64)
    for oy in range(oh):
        for ox in range(ow):
            for co in range(cout):
                acc = 0.0 if bias is None else float(bias[co])
                for ky in range(kh):
                    iy = oy * stride + ky - pad
                    if iy < 0 or iy >= h:
                        continue
                    for kx in range(kw):
                        ix = ox * stride + kx - pad
                        if ix < 0 or ix >= wid:
                            continue
                        for ci in range(cin):
                            acc += float(x[iy, ix, ci]) * float(w[ky, kx, ci, co])
                out[oy, ox, co] = acc
    return out


def bilinear_resize(x: np.ndarray, h2: int, w2: int, nthreads: int = 1) -> np.ndarray:
    h, w, _ = x.shape
    ys = (np.arange(h2, dtype=np.float64) + 0.5) * (h - 1) / h2
    xs = (np.arange(w2, dtype=np.float64) + 0.5) * (w - 1) / w2
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    ty = ys - y0
    tx = xs - x0
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)

    x64 = x.astype(np.float64, copy=False)
    top = x64[y0][:, x0] * (1 - tx)[None, :, None] + x64[y0][:, x1] * tx[None, :, None]
    bot = x64[y1][:, x0] * (1 - tx)[None, :, None] + x64[y1][:, x1] * tx[None, :, None]
    out = top * (1 - ty)[:, None, None] + bot * ty[:, None, None]
    return out.astype(x.dtype)
