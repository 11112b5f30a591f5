"""Command line interface.

Exit codes: 0 success, 2 unreadable input (image or feature bytes),
3 refused configuration (bad arguments, digest mismatch, checkpoint
problems).
"""

from __future__ import annotations

import argparse
import sys

from .backbones import checkpoint_digest
from .errors import ExportError, ImageError
from .export import ExportJob, export_pair

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_CONFIG = 3


def cmd_export(args: argparse.Namespace) -> int:
    job = ExportJob(
        frame1=args.frame1,
        frame2=args.frame2,
        out_dir=args.out,
        dino_dir=args.dino,
        depth_dir=args.depth,
        dino_digest=args.dino_digest,
        depth_digest=args.depth_digest,
        threads=args.threads,
    )
    result = export_pair(job)
    plan = result.plan
    print(
        f"exported {plan.grid_h}x{plan.grid_w} grid "
        f"(declared {plan.declared_h}x{plan.declared_w}) to {args.out}"
    )
    for filename in sorted(result.files):
        print(f"  {filename}")
    print(f"  {result.manifest.name}")
    return EXIT_OK


def cmd_digest(args: argparse.Namespace) -> int:
    for ckpt in args.checkpoint:
        print(f"{checkpoint_digest(ckpt)}  {ckpt}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ftx-export",
        description="Export frozen backbone features for a frame pair as FTX files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    exp = sub.add_parser("export", help="run both backbones on a frame pair")
    exp.add_argument("--frame1", required=True, help="first frame image")
    exp.add_argument("--frame2", required=True, help="second frame image")
    exp.add_argument("--out", required=True, help="output bundle directory")
    exp.add_argument("--dino", required=True, help="DINOv2 checkpoint directory")
    exp.add_argument("--depth", required=True,
                     help="Depth-Anything checkpoint directory")
    exp.add_argument("--dino-digest", default=None,
                     help="expected SHA-256 of the DINO checkpoint weights")
    exp.add_argument("--depth-digest", default=None,
                     help="expected SHA-256 of the depth checkpoint weights")
    exp.add_argument("--threads", type=int, default=1,
                     help="torch CPU threads (default 1)")
    exp.set_defaults(fn=cmd_export)

    dig = sub.add_parser("digest", help="print checkpoint weight digests")
    dig.add_argument("checkpoint", nargs="+", help="checkpoint directories")
    dig.set_defaults(fn=cmd_digest)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ImageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
