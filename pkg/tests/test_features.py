"""Feature container format: byte layout, validation offsets, bundles."""

import struct
import zlib

import numpy as np
import pytest

from flowmatch.errors import DimensionError, FormatError, NumericError
from flowmatch.features import (
    BUNDLE_FILES,
    BUNDLE_GT_FILE,
    FeatureRecord,
    FramePairBundle,
    Source,
    read_bundle,
    read_ftx,
    shift_valid_cells,
    synth_shifted_pair,
    write_bundle,
    write_ftx,
)
from flowmatch.flowio import FlowField


def small_record(source=Source.SYNTHETIC, frame=1, h=2, w=2, c=3, stride=8):
    data = np.arange(h * w * c, dtype=np.float32).reshape(h, w, c)
    return FeatureRecord(
        source=source, frame_index=frame, stride_wrt_image=stride,
        image_h=h * stride, image_w=w * stride, data=data,
    )


def test_round_trip(tmp_path):
    rec = small_record()
    path = tmp_path / "a.ftx"
    write_ftx(rec, path)
    back = read_ftx(path)
    assert back.source == rec.source
    assert back.frame_index == rec.frame_index
    assert back.stride_wrt_image == rec.stride_wrt_image
    assert (back.image_h, back.image_w) == (rec.image_h, rec.image_w)
    assert back.data.tobytes() == rec.data.tobytes()


def test_exact_byte_layout(tmp_path):
    """The on-disk encoding is pinned, not merely round-trippable."""
    data = np.array([[[1.5, -2.0]]], dtype=np.float32)
    rec = FeatureRecord(
        source=Source.DEPTH, frame_index=2, stride_wrt_image=8,
        image_h=8, image_w=8, data=data,
    )
    path = tmp_path / "b.ftx"
    write_ftx(rec, path)
    raw = path.read_bytes()
    payload = data.tobytes()
    want = (
        struct.pack("<4sBBBB6I", b"FTX1", 1, 1, 2, 0, 1, 1, 2, 8, 8, 8)
        + payload
        + struct.pack("<I", zlib.crc32(payload))
    )
    assert raw == want
    assert len(raw) == 32 + 8 + 4


def corrupt(path, offset, value):
    raw = bytearray(path.read_bytes())
    raw[offset] = value
    path.write_bytes(bytes(raw))


class TestReaderRejections:
    @pytest.fixture
    def good(self, tmp_path):
        path = tmp_path / "c.ftx"
        write_ftx(small_record(), path)
        return path

    def expect(self, path, offset, fragment):
        with pytest.raises(FormatError) as info:
            read_ftx(path)
        assert info.value.offset == offset
        assert fragment in str(info.value)

    def test_bad_magic(self, good):
        corrupt(good, 0, ord("X"))
        self.expect(good, 0, "magic")

    def test_bad_magic_wins_over_truncation(self, good):
        good.write_bytes(b"JUNKDATA")
        self.expect(good, 0, "magic")

    def test_short_file(self, good):
        good.write_bytes(good.read_bytes()[:10])
        self.expect(good, 10, "header")

    def test_bad_version(self, good):
        corrupt(good, 4, 9)
        self.expect(good, 4, "version")

    def test_bad_source(self, good):
        corrupt(good, 5, 7)
        self.expect(good, 5, "source")

    def test_bad_frame(self, good):
        corrupt(good, 6, 3)
        self.expect(good, 6, "frame")

    def test_reserved_nonzero(self, good):
        corrupt(good, 7, 1)
        self.expect(good, 7, "reserved")

    def test_zero_extent(self, good):
        raw = bytearray(good.read_bytes())
        struct.pack_into("<I", raw, 8, 0)
        good.write_bytes(bytes(raw))
        self.expect(good, 8, "positive")

    def test_truncated_payload(self, good):
        raw = good.read_bytes()[:-6]
        good.write_bytes(raw)
        self.expect(good, len(raw), "truncated")

    def test_crc_mismatch(self, good):
        raw = bytearray(good.read_bytes())
        raw[40] ^= 0xFF  # payload byte; CRC no longer matches
        good.write_bytes(bytes(raw))
        size = len(raw)
        self.expect(good, size - 4, "CRC")

    def test_nonfinite_payload(self, tmp_path):
        data = np.zeros((1, 2, 2), dtype=np.float32)
        rec = FeatureRecord(
            source=Source.SYNTHETIC, frame_index=1, stride_wrt_image=8,
            image_h=8, image_w=16, data=data,
        )
        path = tmp_path / "n.ftx"
        write_ftx(rec, path)
        raw = bytearray(path.read_bytes())
        # overwrite element index 3 with NaN, then fix the CRC
        struct.pack_into("<f", raw, 32 + 4 * 3, float("nan"))
        struct.pack_into("<I", raw, 32 + 16, zlib.crc32(bytes(raw[32:48])))
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as info:
            read_ftx(path)
        assert info.value.offset == 32 + 4 * 3


class TestRecordValidation:
    def test_dino_grid_law_enforced(self):
        # 100x60 image at stride 8 must give a ceil-divided 13x8 grid.
        data = np.zeros((13, 8, 4), dtype=np.float32)
        FeatureRecord(Source.DINO, 1, 8, 100, 60, data)
        with pytest.raises(DimensionError):
            FeatureRecord(Source.DINO, 1, 8, 100, 60, np.zeros((12, 8, 4), np.float32))

    def test_frame_index_restricted(self):
        with pytest.raises(DimensionError):
            small_record(frame=0)

    def test_data_is_readonly(self):
        rec = small_record()
        with pytest.raises(ValueError):
            rec.data[0, 0, 0] = 1.0

    def test_nonfinite_rejected(self):
        data = np.full((1, 1, 1), np.nan, dtype=np.float32)
        with pytest.raises(NumericError):
            FeatureRecord(Source.SYNTHETIC, 1, 8, 8, 8, data)


class TestBundle:
    def test_rejects_frame_swap(self):
        b = synth_shifted_pair(4, 4, 16, (1, 0), 50.0)
        with pytest.raises(DimensionError):
            FramePairBundle(
                image_h=b.image_h, image_w=b.image_w,
                dino1=b.dino2, dino2=b.dino1,
                depth1=b.depth1, depth2=b.depth2,
            )

    def test_rejects_depth_record_in_dino_slot(self):
        b = synth_shifted_pair(4, 4, 16, (1, 0), 50.0)
        depth_as_dino = FeatureRecord(
            Source.DEPTH, 1, b.depth1.stride_wrt_image,
            b.depth1.image_h, b.depth1.image_w, np.asarray(b.depth1.data),
        )
        with pytest.raises(DimensionError):
            FramePairBundle(
                image_h=b.image_h, image_w=b.image_w,
                dino1=depth_as_dino, dino2=b.dino2,
                depth1=b.depth1, depth2=b.depth2,
            )

    def test_round_trip_directory(self, tmp_path):
        b = synth_shifted_pair(4, 4, 16, (1, -1), 50.0)
        write_bundle(b, tmp_path / "pair")
        names = sorted(p.name for p in (tmp_path / "pair").iterdir())
        assert names == sorted([*BUNDLE_FILES.values(), BUNDLE_GT_FILE])
        back = read_bundle(tmp_path / "pair")
        assert back.dino1.data.tobytes() == b.dino1.data.tobytes()
        assert back.gt is not None
        # invalid pixels become the on-disk sentinel; values survive only
        # where the mask says they are meaningful
        valid = b.gt.valid_mask()
        assert (back.gt.valid_mask() == valid).all()
        assert (back.gt.data[valid] == b.gt.data[valid]).all()

    def test_read_missing_file_is_format_error(self, tmp_path):
        b = synth_shifted_pair(4, 4, 16, (1, 0), 50.0)
        write_bundle(b, tmp_path / "pair")
        (tmp_path / "pair" / BUNDLE_FILES["depth2"]).unlink()
        with pytest.raises(FormatError):
            read_bundle(tmp_path / "pair")

    def test_gt_optional(self, tmp_path):
        b = synth_shifted_pair(4, 4, 16, (1, 0), 50.0)
        write_bundle(b, tmp_path / "pair")
        (tmp_path / "pair" / BUNDLE_GT_FILE).unlink()
        back = read_bundle(tmp_path / "pair")
        assert back.gt is None


class TestSynthPair:
    def test_frame2_is_rolled_frame1(self):
        b = synth_shifted_pair(5, 6, 32, (2, 1), 50.0)
        f1 = np.asarray(b.dino1.data)
        f2 = np.asarray(b.dino2.data)
        assert (np.roll(f1, (1, 2), axis=(0, 1)) == f2).all()

    def test_one_hot_sharpness(self):
        b = synth_shifted_pair(3, 3, 9, (0, 0), 12.5)
        f1 = np.asarray(b.dino1.data)
        assert f1[1, 2, 1 * 3 + 2] == 12.5
        assert np.count_nonzero(f1) == 9

    def test_ground_truth_constant_and_masked(self):
        b = synth_shifted_pair(4, 4, 16, (1, -2), 50.0)
        gt = b.gt
        valid = gt.valid_mask()
        assert (gt.data[valid] == np.array([8.0, -16.0], np.float32)).all()
        # wrap-contaminated border pixels are masked out
        assert valid.sum() < valid.size
        assert valid.any()

    def test_channel_capacity_enforced(self):
        with pytest.raises(DimensionError):
            synth_shifted_pair(4, 4, 15, (1, 0), 50.0)

    def test_shift_valid_cells_counts(self):
        m = shift_valid_cells(4, 5, 2, -1)
        assert m.shape == (4, 5)
        assert m.sum() == (5 - 2) * (4 - 1)
        assert bool(m[1, 0]) and not bool(m[0, 0]) and not bool(m[1, 3])
