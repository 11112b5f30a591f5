"""Run manifests: diff-friendly UTF-8 key-value records of an evaluation
run, with per-pair and aggregate metrics under the benchmark column
names (EPE, s0-10, s10-40, s40+, F1-all)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError
from .metrics import EvalReport

METRIC_COLUMNS = (
    ("EPE", "epe"),
    ("s0-10", "s0_10"),
    ("s10-40", "s10_40"),
    ("s40+", "s40plus"),
    ("F1-all", "f1_all"),
)
COUNT_COLUMNS = (
    ("pixels.0-10", "count_0_10"),
    ("pixels.10-40", "count_10_40"),
    ("pixels.40+", "count_40plus"),
    ("pixels.valid", "valid_count"),
)


@dataclass(frozen=True)
class PairResult:
    name: str
    report: EvalReport | None = None
    error: str | None = None


@dataclass(frozen=True)
class RunManifest:
    config: dict[str, str] = field(default_factory=dict)
    inputs: tuple[str, ...] = ()
    weight_digest: str | None = None
    pairs: tuple[PairResult, ...] = ()
    aggregate: EvalReport | None = None
    timings: dict[str, float] = field(default_factory=dict)


def _report_lines(prefix: str, report: EvalReport) -> list[str]:
    lines = [f"{prefix}.{column} = {getattr(report, attr)!r}"
             for column, attr in METRIC_COLUMNS]
    lines += [f"{prefix}.{column} = {getattr(report, attr)}"
              for column, attr in COUNT_COLUMNS]
    lines += [f"{prefix}.provenance.{key} = {value}"
              for key, value in sorted(report.provenance.items())]
    return lines


def render_manifest(manifest: RunManifest) -> str:
    lines = ["manifest.version = 1"]
    lines += [f"config.{k} = {manifest.config[k]}" for k in sorted(manifest.config)]
    lines += [f"input.{i} = {p}" for i, p in enumerate(manifest.inputs)]
    if manifest.weight_digest is not None:
        lines.append(f"weights.sha256 = {manifest.weight_digest}")
    for i, pair in enumerate(manifest.pairs):
        lines.append(f"pair.{i}.name = {pair.name}")
        if pair.error is not None:
            lines.append(f"pair.{i}.error = {pair.error}")
        if pair.report is not None:
            lines += _report_lines(f"pair.{i}", pair.report)
    if manifest.aggregate is not None:
        lines += _report_lines("aggregate", manifest.aggregate)
    lines += [f"timing.{k} = {manifest.timings[k]!r}" for k in sorted(manifest.timings)]
    return "\n".join(lines) + "\n"


def write_manifest(manifest: RunManifest, path: str | Path) -> None:
    Path(path).write_text(render_manifest(manifest), encoding="utf-8")


def parse_manifest(text: str) -> dict[str, str]:
    """Flat key-value view of a rendered manifest, for tests and tooling."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if " = " not in line:
            raise FormatError(f"line {lineno}: expected `key = value`, got {raw!r}")
        key, _, value = line.partition(" = ")
        out[key] = value
    return out
