"""Compare the compiled and pure-Python kernel backends.

Times the four hot kernels and the full matching chain at a few grid
sizes, printing one row per (kernel, size) with the speedup ratio.
"""

import argparse
import time

import numpy as np

from flowmatch import _slowkern
from flowmatch import matching, propagation

try:
    from flowmatch import _fastkern
except ImportError:
    _fastkern = None


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_kernels(cells, dim, threads, repeats):
    rng = np.random.default_rng(0)
    n = cells * cells
    a = rng.standard_normal((n, dim)).astype(np.float32)
    bt = rng.standard_normal((n, dim)).astype(np.float32)
    logits = rng.standard_normal((n, min(n, 2048))).astype(np.float32)
    img = rng.standard_normal((cells, cells, 16)).astype(np.float32)
    kern = rng.standard_normal((3, 3, 16, 16)).astype(np.float32)
    bias = np.zeros(16, dtype=np.float32)

    cases = {
        f"matmul {n}x{dim} @ {dim}x{n}": lambda k: k.matmul_nt(a, bt, threads),
        f"softmax {logits.shape[0]}x{logits.shape[1]}": lambda k: (
            k.softmax_rows_inplace(logits.copy(), threads)
        ),
        f"conv3x3 {cells}x{cells}x16": lambda k: (
            k.conv2d(img, kern, bias, 1, 1, threads)
        ),
        f"bilinear {cells}->{8 * cells}": lambda k: (
            k.bilinear_resize(img, 8 * cells, 8 * cells, threads)
        ),
    }
    for label, call in cases.items():
        slow = best_of(lambda: call(_slowkern), repeats)
        if _fastkern is None:
            print(f"{label:<34} python {slow * 1e3:9.2f} ms   (no extension)")
            continue
        fast = best_of(lambda: call(_fastkern), repeats)
        print(
            f"{label:<34} python {slow * 1e3:9.2f} ms   "
            f"cython {fast * 1e3:9.2f} ms   x{slow / fast:5.2f}"
        )


def bench_chain(cells, dim, repeats):
    rng = np.random.default_rng(1)
    f1 = rng.standard_normal((cells, cells, dim)).astype(np.float32)
    f2 = rng.standard_normal((cells, cells, dim)).astype(np.float32)
    grid = matching.make_coord_grid(cells, cells)

    def chain():
        corr = matching.correlation(f1, f2, cap=cells * cells)
        match = matching.match_distribution(corr)
        _, flow_raw = matching.expected_flow(match, grid)
        attn = propagation.self_affinity(f1)
        return propagation.propagate(attn, flow_raw)

    t = best_of(chain, repeats)
    print(f"matching chain {cells}x{cells}x{dim}: {t * 1e3:.1f} ms "
          f"(active backend)")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--cells", type=int, nargs="+", default=[16, 32, 48])
    parser.add_argument("--dim", type=int, default=128)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if _fastkern is None:
        print("compiled extension unavailable; timing the Python backend only")
    for cells in args.cells:
        print(f"-- grid {cells}x{cells}, {args.threads} thread(s) --")
        bench_kernels(cells, args.dim, args.threads, args.repeats)
        bench_chain(cells, args.dim, args.repeats)


if __name__ == "__main__":
    main()
