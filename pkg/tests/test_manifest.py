"""Run manifest rendering and parsing."""

import numpy as np

from flowmatch.flowio import FlowField
from flowmatch.manifest import (
    PairResult,
    RunManifest,
    parse_manifest,
    render_manifest,
    write_manifest,
)
from flowmatch.metrics import aggregate_reports, epe_report


def sample_manifest():
    gt = FlowField(np.zeros((2, 3, 2)))
    pred = FlowField(np.full((2, 3, 2), [3.0, 4.0]))
    r1 = epe_report(pred, gt, provenance={"backend": "python"})
    r2 = epe_report(gt, gt)
    return RunManifest(
        config={"seed": "3", "gamma": "0.9"},
        inputs=("a.flo", "b.flo"),
        weight_digest="ab" * 32,
        pairs=(
            PairResult(name="a.flo", report=r1),
            PairResult(name="b.flo", report=r2),
            PairResult(name="broken.flo", error="bad magic"),
        ),
        aggregate=aggregate_reports([r1, r2]),
        timings={"score_s": 0.125},
    )


def test_render_is_deterministic():
    a = render_manifest(sample_manifest())
    b = render_manifest(sample_manifest())
    assert a == b


def test_metric_column_names():
    text = render_manifest(sample_manifest())
    for col in ("EPE", "s0-10", "s10-40", "s40+", "F1-all"):
        assert f"pair.0.{col} = " in text
        assert f"aggregate.{col} = " in text


def test_float_round_trip_exact():
    text = render_manifest(sample_manifest())
    values = parse_manifest(text)
    assert float(values["pair.0.EPE"]) == 5.0
    assert float(values["aggregate.EPE"]) == 2.5
    assert float(values["timing.score_s"]) == 0.125


def test_errors_recorded_per_pair():
    values = parse_manifest(render_manifest(sample_manifest()))
    assert values["pair.2.error"] == "bad magic"
    assert "pair.2.EPE" not in values


def test_provenance_lines_present():
    values = parse_manifest(render_manifest(sample_manifest()))
    assert values["pair.0.provenance.backend"] == "python"


def test_weight_digest_line():
    values = parse_manifest(render_manifest(sample_manifest()))
    assert values["weights.sha256"] == "ab" * 32


def test_write_and_reparse(tmp_path):
    path = tmp_path / "run.txt"
    write_manifest(sample_manifest(), path)
    values = parse_manifest(path.read_text(encoding="utf-8"))
    assert values["manifest.version"] == "1"
    assert values["config.gamma"] == "0.9"
    assert int(values["aggregate.pixels.valid"]) == 12
