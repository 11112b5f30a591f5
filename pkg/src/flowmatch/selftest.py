"""Self-contained verification suites: oracle equivalence, shift
recovery, gradient check, codecs, and normalization.

The matching oracle here is deliberately primitive: pure-Python double
loops over cells with compensated sums, sharing no code with the tiled
kernels it cross-checks.
"""

from __future__ import annotations

import math
import struct
import tempfile
from pathlib import Path
from typing import Callable

import numpy as np

from . import loss, matching, pipeline, propagation
from .errors import FormatError
from .features import shift_valid_cells, synth_shifted_pair
from .flowio import FlowField, read_flo, write_flo, read_kitti_png, write_kitti_png


def naive_matching_oracle(
    f1: np.ndarray, f2: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Reference matching distribution and raw flow, double loops only."""
    h, w, d = f1.shape
    n = h * w
    scale = 1.0 / math.sqrt(d)
    a = [[float(v) for v in row] for row in f1.reshape(n, d)]
    b = [[float(v) for v in row] for row in f2.reshape(n, d)]

    match = []
    for p in range(n):
        logits = [
            math.fsum(a[p][k] * b[q][k] for k in range(d)) * scale for q in range(n)
        ]
        top = max(logits)
        exps = [math.exp(v - top) for v in logits]
        total = math.fsum(exps)
        match.append([e / total for e in exps])

    flow = []
    for p in range(n):
        ex = math.fsum(match[p][q] * (q % w) for q in range(n))
        ey = math.fsum(match[p][q] * (q // w) for q in range(n))
        flow.append((ex - p % w, ey - p // w))
    return (
        np.array(match, dtype=np.float64),
        np.array(flow, dtype=np.float64).reshape(h, w, 2),
    )


def suite_oracle_equivalence(pairs: int = 200, seed: int = 7) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst_match = 0.0
    worst_flow = 0.0
    for _ in range(pairs):
        h = int(rng.integers(1, 9))
        w = int(rng.integers(1, 9))
        d = int(rng.integers(4, 9))
        f1 = rng.standard_normal((h, w, d)).astype(np.float32)
        f2 = rng.standard_normal((h, w, d)).astype(np.float32)
        corr = matching.correlation(f1, f2)
        match = matching.match_distribution(corr)
        _, flow_raw = matching.expected_flow(
            match, matching.make_coord_grid(h, w)
        )
        ref_match, ref_flow = naive_matching_oracle(f1, f2)
        worst_match = max(worst_match, float(np.abs(match - ref_match).max()))
        worst_flow = max(worst_flow, float(np.abs(flow_raw - ref_flow).max()))
    ok = worst_match < 1e-5 and worst_flow < 1e-5
    return ok, (
        f"{pairs} pairs, max |match - oracle| {worst_match:.2e}, "
        f"max |flow - oracle| {worst_flow:.2e} (limit 1e-5)"
    )


def suite_shift_recovery() -> tuple[bool, str]:
    cfg = pipeline.PipelineConfig(fusion_enabled=False, interaction_blocks=0)
    worst_cells = 0.0
    worst_px = 0.0
    for dx in range(-3, 4):
        for dy in range(-3, 4):
            bundle = synth_shifted_pair(16, 16, 256, (dx, dy), sharpness=50.0)
            result = pipeline.infer(bundle, None, cfg)
            keep = shift_valid_cells(16, 16, dx, dy)
            err = np.abs(
                result.flow_prop - np.array([dx, dy], dtype=np.float32)
            ).max(axis=2)[keep]
            worst_cells = max(worst_cells, float(err.max()))
            gt = bundle.gt
            px_err = np.abs(result.flow_full.data - gt.data).max(axis=2)
            worst_px = max(worst_px, float(px_err[gt.valid_mask()].max()))
    ok = worst_cells < 0.01 and worst_px < 0.1
    return ok, (
        f"49 shifts on 16x16, max cell error {worst_cells:.2e} (limit 0.01), "
        f"max full-res error {worst_px:.2e} px (limit 0.1)"
    )


def suite_gradcheck(seeds: int = 20) -> tuple[bool, str]:
    worst = 0.0
    for seed in range(seeds):
        f1, f2, gt = loss.draw_gradcheck_case(seed)
        worst = max(worst, loss.gradcheck_matching_chain(f1, f2, gt, eps=1e-5))
    return worst < 1e-4, (
        f"{seeds} seeds, max relative gradient error {worst:.2e} (limit 1e-4)"
    )


def suite_codecs() -> tuple[bool, str]:
    rng = np.random.default_rng(11)
    with tempfile.TemporaryDirectory() as tmp:
        flo = Path(tmp) / "t.flo"
        for i in range(50):
            h = int(rng.integers(1, 17))
            w = int(rng.integers(1, 17))
            field = FlowField(
                rng.normal(0.0, 50.0, size=(h, w, 2)).astype(np.float32)
            )
            write_flo(field, flo)
            back = read_flo(flo)
            if not np.array_equal(back.data, field.data) or back.valid is not None:
                return False, f"flo round-trip {i} not bit-exact"

        tiny = FlowField(np.array([[[1.5, -2.25]]], dtype=np.float32))
        write_flo(tiny, flo)
        if flo.stat().st_size != 20:
            return False, f"1x1 flo file is {flo.stat().st_size} bytes, want 20"
        if not np.array_equal(read_flo(flo).data, tiny.data):
            return False, "1x1 flo round-trip failed"

        bad = Path(tmp) / "bad.flo"
        bad.write_bytes(struct.pack("<f", 202021.24) + b"\x00" * 16)
        try:
            read_flo(bad)
            return False, "bad magic was accepted"
        except FormatError:
            pass

        png = Path(tmp) / "t.png"
        h, w = 13, 17
        data = rng.uniform(-400.0, 400.0, size=(h, w, 2)).astype(np.float32)
        valid = rng.random((h, w)) > 0.3
        field = FlowField(data, valid)
        write_kitti_png(field, png)
        back = read_kitti_png(png)
        if back.valid is None or not np.array_equal(back.valid, valid):
            return False, "KITTI mask round-trip not exact"
        err = float(np.abs(back.data - field.data)[valid].max())
        if err > 1.0 / 128.0 + 1e-12:
            return False, f"KITTI round-trip error {err:.2e} px over 1/128"
    return True, "flo bit-exact x50, KITTI within 1/128 px and mask-exact"


def suite_normalization() -> tuple[bool, str]:
    rng = np.random.default_rng(23)
    worst = 0.0
    checked = 0
    for scale in (1.0, 100.0):
        for _ in range(10):
            h = int(rng.integers(2, 9))
            w = int(rng.integers(2, 9))
            d = int(rng.integers(4, 9))
            f1 = (scale * rng.standard_normal((h, w, d))).astype(np.float32)
            f2 = (scale * rng.standard_normal((h, w, d))).astype(np.float32)
            match = matching.match_distribution(matching.correlation(f1, f2))
            attn = propagation.self_affinity(f1)
            for m in (match, attn):
                sums = m.sum(axis=1, dtype=np.float64)
                worst = max(worst, float(np.abs(sums - 1.0).max()))
                checked += m.shape[0]
    for shift in ((0, 0), (3, 2)):
        bundle = synth_shifted_pair(8, 8, 64, shift, sharpness=50.0)
        match = matching.match_distribution(
            matching.correlation(bundle.dino1.data, bundle.dino2.data)
        )
        sums = match.sum(axis=1, dtype=np.float64)
        worst = max(worst, float(np.abs(sums - 1.0).max()))
        checked += match.shape[0]
    return worst < 1e-6, (
        f"{checked} rows, worst |row sum - 1| = {worst:.2e} (limit 1e-6)"
    )


SUITES: dict[str, Callable[[], tuple[bool, str]]] = {
    "oracle-equivalence": suite_oracle_equivalence,
    "shift-recovery": suite_shift_recovery,
    "gradcheck": suite_gradcheck,
    "codecs": suite_codecs,
    "normalization": suite_normalization,
}


def run_suites(name_filter: str | None = None) -> list[tuple[str, bool, str]]:
    results = []
    for name, fn in SUITES.items():
        if name_filter and name_filter not in name:
            continue
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    return results
