"""The writer is only correct if the engine's reader accepts its bytes."""

import numpy as np
import pytest
from flowmatch import Source, read_ftx

from ftx_exporter import ShapeError
from ftx_exporter.ftx import SOURCE_DEPTH, SOURCE_DINO, write_record


def test_engine_reads_back_bit_identical(tmp_path, rng=np.random.default_rng(3)):
    data = rng.standard_normal((5, 4, 6)).astype(np.float32)
    path = tmp_path / "rec.ftx"
    write_record(path, SOURCE_DINO, 1, 8, 40, 32, data)
    rec = read_ftx(path)
    assert rec.source == Source.DINO
    assert rec.frame_index == 1
    assert rec.stride_wrt_image == 8
    assert (rec.image_h, rec.image_w) == (40, 32)
    assert np.array_equal(rec.data, data)


def test_depth_record_any_grid(tmp_path):
    data = np.ones((40, 32, 3), dtype=np.float32)
    write_record(tmp_path / "d.ftx", SOURCE_DEPTH, 2, 1, 40, 32, data)
    rec = read_ftx(tmp_path / "d.ftx")
    assert rec.source == Source.DEPTH
    assert rec.stride_wrt_image == 1


def test_dino_grid_law_enforced_at_write(tmp_path):
    data = np.zeros((6, 4, 2), dtype=np.float32)
    with pytest.raises(ShapeError, match="ceil"):
        write_record(tmp_path / "x.ftx", SOURCE_DINO, 1, 8, 40, 32, data)


def test_non_finite_rejected(tmp_path):
    data = np.zeros((2, 2, 1), dtype=np.float32)
    data[1, 0, 0] = np.nan
    with pytest.raises(ShapeError, match="finite"):
        write_record(tmp_path / "x.ftx", SOURCE_DEPTH, 1, 1, 2, 2, data)


def test_bad_frame_index_rejected(tmp_path):
    data = np.zeros((1, 1, 1), dtype=np.float32)
    with pytest.raises(ShapeError):
        write_record(tmp_path / "x.ftx", SOURCE_DEPTH, 3, 1, 1, 1, data)


def test_nonpositive_stride_rejected(tmp_path):
    data = np.zeros((1, 1, 1), dtype=np.float32)
    with pytest.raises(ShapeError):
        write_record(tmp_path / "x.ftx", SOURCE_DEPTH, 1, 0, 1, 1, data)
