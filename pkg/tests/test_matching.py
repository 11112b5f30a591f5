"""Global matching stage: correlation fixtures, distribution laws,
expected-coordinate arithmetic, transformer interaction symmetries."""

import math

import numpy as np
import pytest

from flowmatch.errors import (
    ConfigError,
    DimensionError,
    NumericError,
    ResourceLimitError,
)
from flowmatch.matching import (
    MatchingResult,
    correlation,
    expected_flow,
    interact,
    make_coord_grid,
    match_distribution,
    match_pair,
    positional_encoding_2d,
    random_interaction_weights,
)


class TestCoordGrid:
    def test_xy_convention(self):
        grid = make_coord_grid(2, 3)
        assert grid.shape == (2, 3, 2)
        assert tuple(grid[0, 0]) == (0.0, 0.0)
        assert tuple(grid[1, 2]) == (2.0, 1.0)  # (x=col, y=row)

    def test_dtype(self):
        assert make_coord_grid(2, 2, dtype=np.float64).dtype == np.float64


class TestPositionalEncoding:
    def test_width_must_be_multiple_of_four(self):
        with pytest.raises(ConfigError):
            positional_encoding_2d(2, 2, 6)

    def test_known_entries(self):
        pe = positional_encoding_2d(1, 4, 8)
        # first quarter encodes x with unit frequency in channel 0
        np.testing.assert_allclose(pe[0, 1, 0], math.sin(1.0), atol=1e-6)
        np.testing.assert_allclose(pe[0, 3, 2], math.cos(3.0), atol=1e-6)

    def test_bounded_and_varies_in_both_axes(self):
        pe = positional_encoding_2d(5, 7, 16).astype(np.float64)
        assert np.abs(pe).max() <= 1.0 + 1e-6
        assert not (pe[0] == pe[1]).all()
        assert not (pe[:, 0] == pe[:, 1]).all()


class TestCorrelation:
    def test_hand_fixture(self):
        f1 = np.array([[[1.0, 0.0], [0.0, 1.0]]], dtype=np.float32)
        f2 = np.array([[[2.0, 0.0], [0.0, 3.0]]], dtype=np.float32)
        corr = correlation(f1, f2)
        want = np.array([[2.0, 0.0], [0.0, 3.0]]) / math.sqrt(2.0)
        np.testing.assert_allclose(corr, want, atol=1e-7)

    def test_orthogonal_rows_give_scaled_diagonal(self, rng):
        d = 8
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        f = (q[:4] * 3.0).reshape(2, 2, d)
        corr = correlation(f, f)
        want = np.eye(4) * (9.0 / math.sqrt(d))
        np.testing.assert_allclose(corr, want, atol=1e-6)

    def test_linear_in_each_argument(self, rng):
        f1 = rng.standard_normal((2, 3, 5))
        f2 = rng.standard_normal((2, 3, 5))
        np.testing.assert_allclose(
            correlation(2.0 * f1, f2), 2.0 * correlation(f1, f2), atol=1e-12
        )

    def test_cell_cap_enforced(self):
        f = np.zeros((3, 3, 2), dtype=np.float32)
        with pytest.raises(ResourceLimitError) as info:
            correlation(f, f, cap=8)
        assert "correlation_cap" in str(info.value)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            correlation(np.zeros((2, 2, 3), np.float32),
                        np.zeros((2, 3, 3), np.float32))


class TestMatchDistribution:
    def test_rows_stochastic(self, rng):
        corr = rng.standard_normal((9, 9)) * 10.0
        m = match_distribution(corr)
        np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-12)
        assert (m >= 0).all()

    def test_row_constant_shift_invariance(self, rng):
        corr = rng.standard_normal((6, 6))
        shifted = corr + 37.5
        a = match_distribution(corr)
        b = match_distribution(shifted)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-7)

    def test_non_square_rejected(self, rng):
        with pytest.raises(DimensionError):
            match_distribution(rng.standard_normal((3, 4)))


class TestExpectedFlow:
    def test_uniform_distribution_points_at_centroid(self):
        h, w = 3, 5
        n = h * w
        match = np.full((n, n), 1.0 / n)
        grid = make_coord_grid(h, w, dtype=np.float64)
        expected, flow = expected_flow(match, grid)
        np.testing.assert_allclose(expected[..., 0], (w - 1) / 2, atol=1e-12)
        np.testing.assert_allclose(expected[..., 1], (h - 1) / 2, atol=1e-12)
        centroid = np.array([(w - 1) / 2, (h - 1) / 2])
        np.testing.assert_allclose(flow, centroid - grid, atol=1e-12)

    def test_identity_distribution_gives_zero_flow(self):
        h, w = 2, 4
        match = np.eye(h * w)
        grid = make_coord_grid(h, w, dtype=np.float64)
        expected, flow = expected_flow(match, grid)
        np.testing.assert_allclose(expected, grid, atol=0)
        np.testing.assert_allclose(flow, 0.0, atol=0)

    def test_cyclic_one_hot_wraps_to_row_start(self):
        w = 4
        n = w
        match = np.zeros((n, n))
        for i in range(n):
            match[i, (i + 1) % n] = 1.0
        grid = make_coord_grid(1, w, dtype=np.float64)
        _, flow = expected_flow(match, grid)
        np.testing.assert_allclose(flow[0, :-1, 0], 1.0, atol=0)
        np.testing.assert_allclose(flow[0, -1, 0], 1.0 - w, atol=0)
        np.testing.assert_allclose(flow[..., 1], 0.0, atol=0)

    def test_grid_row_count_mismatch(self):
        with pytest.raises(DimensionError):
            expected_flow(np.eye(4), make_coord_grid(1, 3))


class TestMatchingResultGuards:
    def test_rejects_non_stochastic_rows(self):
        grid = make_coord_grid(1, 2, dtype=np.float64)
        bad = np.array([[0.7, 0.7], [0.5, 0.5]])
        with pytest.raises(NumericError):
            MatchingResult(
                corr=np.zeros((2, 2)), match=bad,
                expected=grid.copy(), flow_raw=np.zeros((1, 2, 2)),
            )

    def test_rejects_out_of_hull_expectation(self):
        grid = make_coord_grid(1, 2, dtype=np.float64)
        expected = grid.copy()
        expected[0, 0, 0] = -0.5
        with pytest.raises(NumericError):
            MatchingResult(
                corr=np.zeros((2, 2)), match=np.full((2, 2), 0.5),
                expected=expected, flow_raw=np.zeros((1, 2, 2)),
            )


class TestMatchPair:
    def test_sharp_features_recover_shift(self):
        h, w, d = 4, 4, 16
        f1 = np.zeros((h, w, d), dtype=np.float32)
        idx = np.arange(h * w).reshape(h, w)
        f1.reshape(h * w, d)[np.arange(h * w), idx.ravel()] = 50.0
        f2 = np.roll(f1, 1, axis=1)
        res = match_pair(f1, f2)
        np.testing.assert_allclose(res.flow_raw[:, :-1, 0], 1.0, atol=1e-4)
        np.testing.assert_allclose(res.flow_raw[..., 1], 0.0, atol=1e-4)

    def test_float64_features_keep_float64(self):
        f = np.random.default_rng(0).standard_normal((2, 2, 4))
        res = match_pair(f, f)
        assert res.match.dtype == np.float64
        assert res.flow_raw.dtype == np.float64


class TestInteract:
    def make(self, d=8, blocks=2, seed=0):
        return random_interaction_weights(
            np.random.default_rng(seed), d=d, blocks=blocks, ffn_width=2 * d
        )

    def test_zero_blocks_identity(self, rng):
        w = self.make(blocks=0)
        f1 = rng.standard_normal((3, 3, 8)).astype(np.float32)
        f2 = rng.standard_normal((3, 3, 8)).astype(np.float32)
        o1, o2 = interact(f1, f2, w)
        assert o1 is f1 and o2 is f2

    def test_swap_symmetry(self, rng):
        """Frame order only relabels the outputs, never changes them."""
        w = self.make()
        f1 = rng.standard_normal((3, 4, 8)).astype(np.float32)
        f2 = rng.standard_normal((3, 4, 8)).astype(np.float32)
        a1, a2 = interact(f1, f2, w)
        b2, b1 = interact(f2, f1, w)
        assert a1.tobytes() == b1.tobytes()
        assert a2.tobytes() == b2.tobytes()

    def test_positional_encoding_breaks_translation_ties(self, rng):
        """Identical frames still produce position-dependent outputs."""
        w = self.make(blocks=1)
        f = np.ones((2, 4, 8), dtype=np.float32)
        o1, _ = interact(f, f, w)
        assert not (o1[0, 0] == o1[0, 1]).all()

    def test_width_mismatch_rejected(self, rng):
        w = self.make(d=8)
        f = rng.standard_normal((2, 2, 12)).astype(np.float32)
        with pytest.raises(ConfigError):
            interact(f, f, w)
