"""Command-line harness: inference over feature bundles, flow-file
evaluation, self-test suites, and synthetic bundle generation.

Exit codes: 0 success, 1 self-test failure, 2 format error, 3 config
error, 4 no evaluable data. FLOWMATCH_THREADS caps kernel workers;
FLOWMATCH_BACKEND selects the compiled or pure-Python kernels.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import manifest as manifest_mod
from . import metrics, pipeline, selftest
from .backend import BACKEND_NAME, thread_count
from .errors import (
    ConfigError,
    FlowMatchError,
    FormatError,
    UndefinedMetricError,
)
from .features import read_bundle, synth_shifted_pair, write_bundle
from .flowio import read_flo, read_kitti_png, render_colorwheel, write_flo, write_png8

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_FORMAT = 2
EXIT_CONFIG = 3
EXIT_NO_DATA = 4


def _read_flow_any(path: Path):
    if path.suffix.lower() == ".png":
        return read_kitti_png(path)
    return read_flo(path)


def cmd_infer(args: argparse.Namespace) -> int:
    cfg = pipeline.read_config(args.config)
    weights = None
    digest = None
    if args.weights is not None:
        weights = pipeline.load_weights(args.weights, cfg)
        digest = pipeline.weight_file_digest(args.weights)
    elif cfg.fusion_enabled or cfg.interaction_blocks:
        raise ConfigError("config enables fusion or interaction; pass --weights")
    bundle = read_bundle(args.pair)
    result = pipeline.infer(bundle, weights, cfg)
    write_flo(result.flow_full, args.out)
    if args.viz is not None:
        write_png8(render_colorwheel(result.flow_full, args.viz_max_mag), args.viz)
    for stage, seconds in result.timings.items():
        print(f"{stage[:-2]}: {seconds:.3f}s", file=sys.stderr)
    if digest:
        print(f"weights sha256 {digest[:12]}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    if len(args.pred) != len(args.gt):
        raise ConfigError(
            f"{len(args.pred)} predictions but {len(args.gt)} ground-truth files"
        )
    t0 = time.perf_counter()
    pairs = []
    reports = []
    for pred_path, gt_path in zip(args.pred, args.gt):
        name = Path(pred_path).name
        try:
            report = metrics.epe_report(
                _read_flow_any(Path(pred_path)),
                _read_flow_any(Path(gt_path)),
                gt_magnitude_cap=args.gt_magnitude_cap,
            )
        except FlowMatchError as exc:
            print(f"skipping {name}: {exc}", file=sys.stderr)
            pairs.append(manifest_mod.PairResult(name=name, error=str(exc)))
            continue
        pairs.append(manifest_mod.PairResult(name=name, report=report))
        reports.append(report)
    score_s = time.perf_counter() - t0

    aggregate = metrics.aggregate_reports(reports) if reports else None
    run = manifest_mod.RunManifest(
        config={
            "backend": BACKEND_NAME,
            "threads": str(thread_count()),
            "gt_magnitude_cap": str(args.gt_magnitude_cap),
        },
        inputs=tuple(str(p) for p in args.pred + args.gt),
        pairs=tuple(pairs),
        aggregate=aggregate,
        timings={"score_s": score_s},
    )
    text = manifest_mod.render_manifest(run)
    if args.manifest is not None:
        Path(args.manifest).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if not reports:
        print("no evaluable pairs", file=sys.stderr)
        return EXIT_NO_DATA
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    results = selftest.run_suites(args.filter)
    if not results:
        print(f"no suite matches filter {args.filter!r}", file=sys.stderr)
        return EXIT_CONFIG
    width = max(len(name) for name, _, _ in results)
    failed = []
    for name, ok, detail in results:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
        if not ok:
            failed.append(name)
    if failed:
        print(f"failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_SELFTEST
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    bundle = synth_shifted_pair(
        args.cells, args.cells, args.channels,
        (args.dx, args.dy), args.sharpness,
    )
    write_bundle(bundle, args.out)
    print(f"wrote synthetic bundle to {args.out}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowmatch",
        description="Single-pass dense optical flow over exported backbone features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="estimate flow for one feature bundle")
    p.add_argument("--pair", required=True, help="directory with the four FTX files")
    p.add_argument("--weights", help="FMW1 weight file")
    p.add_argument("--config", required=True, help="pipeline config file")
    p.add_argument("--out", required=True, help="output .flo path")
    p.add_argument("--viz", help="optional color-wheel PNG path")
    p.add_argument("--viz-max-mag", type=float, default=None,
                   help="fixed magnitude normalization for --viz")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="score predicted flow files against ground truth")
    p.add_argument("--pred", nargs="+", required=True, help="predicted .flo/.png files")
    p.add_argument("--gt", nargs="+", required=True, help="ground-truth .flo/.png files")
    p.add_argument("--manifest", help="write the run manifest here instead of stdout")
    p.add_argument("--gt-magnitude-cap", type=float, default=None,
                   help="drop pixels whose true motion exceeds this many px")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("selftest", help="run the verification suites")
    p.add_argument("--filter", help="run only suites whose name contains this")
    p.set_defaults(fn=cmd_selftest)

    p = sub.add_parser("synth", help="write a synthetic shifted-pair bundle")
    p.add_argument("--out", required=True, help="output bundle directory")
    p.add_argument("--cells", type=int, default=16, help="grid extent per side")
    p.add_argument("--channels", type=int, default=256, help="feature channels")
    p.add_argument("--dx", type=int, default=2)
    p.add_argument("--dy", type=int, default=0)
    p.add_argument("--sharpness", type=float, default=50.0)
    p.set_defaults(fn=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UndefinedMetricError as exc:
        print(f"nothing to evaluate: {exc}", file=sys.stderr)
        return EXIT_NO_DATA


if __name__ == "__main__":
    sys.exit(main())
