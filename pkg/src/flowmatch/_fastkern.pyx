# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend (OpenMP).

Work is split across threads only at output-row granularity; every output
element is reduced by one thread in a fixed serial order, so results are
bit-identical for any thread count. Built with -ffp-contract=off so the
64-bit conv path performs the same IEEE operations as the Python backend.
"""

from cython.parallel cimport prange
cimport openmp
from libc.math cimport exp, floor

import numpy as np

NAME = "cython"

ctypedef fused real:
    float
    double


def matmul_nt(const real[:, ::1] a, const real[:, ::1] bt, int nthreads):
    """Compute a @ bt.T with float64 accumulation; result in a's dtype.

    Both operands are widened to float64 up front: the conversion is
    exact, so results match converting inside the loop bit for bit, and
    the pure-double MAC loop SLP-vectorizes where the mixed-width one
    does not.
    """
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = bt.shape[0]
    out_np = np.empty((m, n), dtype=np.asarray(a).dtype)
    cdef real[:, ::1] out = out_np
    cdef double[:, ::1] btd = np.asarray(bt, dtype=np.float64)
    cdef double[:, ::1] rows = np.empty((max(nthreads, 1), k), dtype=np.float64)
    cdef Py_ssize_t i, j, p, k8 = k - (k % 8)
    cdef int t
    cdef double s0, s1, s2, s3, s4, s5, s6, s7
    # Raw pointers: memoryview indexing rereads the view struct per access,
    # which blocks the compiler's vectorizer in the hot loop.
    cdef const double *pb = &btd[0, 0]
    cdef const double *pbj
    cdef const real *pa
    cdef double *prow
    cdef real *pout
    for i in prange(m, nogil=True, num_threads=nthreads, schedule='static'):
        t = openmp.omp_get_thread_num()
        pa = &a[i, 0]
        prow = &rows[t, 0]
        pout = &out[i, 0]
        for p in range(k):
            prow[p] = <double> pa[p]
        for j in range(n):
            pbj = pb + j * k
            # Eight interleaved accumulators: vectorizes without changing
            # the (fixed) reassociation pattern per element.
            s0 = 0.0; s1 = 0.0; s2 = 0.0; s3 = 0.0
            s4 = 0.0; s5 = 0.0; s6 = 0.0; s7 = 0.0
            for p in range(0, k8, 8):
                s0 = s0 + prow[p] * pbj[p]
                s1 = s1 + prow[p + 1] * pbj[p + 1]
                s2 = s2 + prow[p + 2] * pbj[p + 2]
                s3 = s3 + prow[p + 3] * pbj[p + 3]
                s4 = s4 + prow[p + 4] * pbj[p + 4]
                s5 = s5 + prow[p + 5] * pbj[p + 5]
                s6 = s6 + prow[p + 6] * pbj[p + 6]
                s7 = s7 + prow[p + 7] * pbj[p + 7]
            for p in range(k8, k):
                s0 = s0 + prow[p] * pbj[p]
            pout[j] = <real> (((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7)))
    return out_np


def softmax_rows_inplace(real[:, ::1] x, int nthreads):
    """Row-wise softmax with max-subtraction, 64-bit exp/sum, in place."""
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    scratch_np = np.empty((nthreads, n), dtype=np.float64)
    cdef double[:, ::1] scratch = scratch_np
    cdef Py_ssize_t i, j
    cdef int t
    cdef double mx, total, e
    for i in prange(m, nogil=True, num_threads=nthreads, schedule='static'):
        t = openmp.omp_get_thread_num()
        mx = <double> x[i, 0]
        for j in range(1, n):
            if <double> x[i, j] > mx:
                mx = <double> x[i, j]
        total = 0.0
        for j in range(n):
            e = exp(<double> x[i, j] - mx)
            scratch[t, j] = e
            total = total + e
        for j in range(n):
            x[i, j] = <real> (scratch[t, j] / total)


def conv2d(const real[:, :, ::1] x, const real[:, :, :, ::1] w,
           const real[::1] bias, int stride, int pad, int nthreads):
    """Zero-padded strided conv, channel-last, float64 accumulation in
    (ky, kx, ci) order per output element."""
    cdef Py_ssize_t h = x.shape[0], wid = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], cout = w.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (wid + 2 * pad - kw) // stride + 1
    out_np = np.empty((oh, ow, cout), dtype=np.asarray(x).dtype)
    cdef real[:, :, ::1] out = out_np
    cdef Py_ssize_t oy, ox, co, ky, kx, ci, iy, ix
    cdef double acc
    for oy in prange(oh, nogil=True, num_threads=nthreads, schedule='static'):
        for ox in range(ow):
            for co in range(cout):
                acc = <double> bias[co]
                for ky in range(kh):
                    iy = oy * stride + ky - pad
                    if iy < 0 or iy >= h:
                        continue
                    for kx in range(kw):
                        ix = ox * stride + kx - pad
                        if ix < 0 or ix >= wid:
                            continue
                        for ci in range(cin):
                            acc = acc + <double> x[iy, ix, ci] * <double> w[ky, kx, ci, co]
                out[oy, ox, co] = <real> acc
    return out_np


def bilinear_resize(const real[:, :, ::1] x, Py_ssize_t h2, Py_ssize_t w2,
                    int nthreads):
    """Resize onto half-pixel output centers mapped over [0, srclen-1]."""
    cdef Py_ssize_t h = x.shape[0], w = x.shape[1], c = x.shape[2]
    out_np = np.empty((h2, w2, c), dtype=np.asarray(x).dtype)
    cdef real[:, :, ::1] out = out_np
    cdef Py_ssize_t oy, ox, ch, y0, x0, y1, x1
    cdef double sy, sx, ty, tx, top, bot
    for oy in prange(h2, nogil=True, num_threads=nthreads, schedule='static'):
        sy = (<double> oy + 0.5) * <double> (h - 1) / <double> h2
        y0 = <Py_ssize_t> floor(sy)
        ty = sy - <double> y0
        y1 = y0 + 1
        if y1 > h - 1:
            y1 = h - 1
        for ox in range(w2):
            sx = (<double> ox + 0.5) * <double> (w - 1) / <double> w2
            x0 = <Py_ssize_t> floor(sx)
            tx = sx - <double> x0
            x1 = x0 + 1
            if x1 > w - 1:
                x1 = w - 1
            for ch in range(c):
                top = <double> x[y0, x0, ch] * (1.0 - tx) + <double> x[y0, x1, ch] * tx
                bot = <double> x[y1, x0, ch] * (1.0 - tx) + <double> x[y1, x1, ch] * tx
                out[oy, ox, ch] = <real> (top * (1.0 - ty) + bot * ty)
    return out_np
