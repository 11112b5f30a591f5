"""Weighted multi-prediction L1 loss and its gradient verification."""

import numpy as np
import pytest

from flowmatch.errors import ConfigError, DimensionError, UndefinedLossError
from flowmatch.flowio import FlowField
from flowmatch.loss import (
    chain_gradients,
    chain_loss,
    draw_gradcheck_case,
    finite_difference_gradients,
    flow_loss,
    gradcheck_matching_chain,
)
from flowmatch.matching import make_coord_grid


def const_pred(shape, du, dv, gt):
    data = gt.data.astype(np.float64)
    data = data + np.array([du, dv])
    return FlowField(data)


def make_gt(h=3, w=4):
    rng = np.random.default_rng(11)
    return FlowField(rng.standard_normal((h, w, 2)))


class TestArithmetic:
    def test_single_prediction_constant_error(self):
        gt = make_gt()
        pred = const_pred(gt.data.shape, 1.0, 1.0, gt)
        report = flow_loss([pred], gt)
        assert report.n == 1
        assert report.per_prediction == ((1.0, pytest.approx(2.0, abs=1e-12)),)
        assert report.total == pytest.approx(2.0, abs=1e-12)

    def test_two_predictions_discount(self):
        """Raw L1 losses (4, 2) under gamma 0.9 combine to 5.6."""
        gt = make_gt()
        early = const_pred(gt.data.shape, 2.0, 2.0, gt)  # raw 4
        final = const_pred(gt.data.shape, 1.0, 1.0, gt)  # raw 2
        report = flow_loss([early, final], gt, gamma=0.9)
        weights = [w for w, _ in report.per_prediction]
        raws = [r for _, r in report.per_prediction]
        assert weights == [0.9, 1.0]
        np.testing.assert_allclose(raws, [4.0, 2.0], atol=1e-12)
        assert abs(report.total - 5.6) < 1e-9

    def test_final_prediction_always_weighs_one(self):
        gt = make_gt()
        preds = [const_pred(gt.data.shape, 1, 0, gt)] * 4
        report = flow_loss(preds, gt, gamma=0.5)
        assert [w for w, _ in report.per_prediction] == [0.125, 0.25, 0.5, 1.0]

    def test_pixel_permutation_invariance(self):
        rng = np.random.default_rng(5)
        gt_data = rng.standard_normal((4, 4, 2))
        pred_data = rng.standard_normal((4, 4, 2))
        perm = rng.permutation(16)
        a = flow_loss([FlowField(pred_data)], FlowField(gt_data)).total
        b = flow_loss(
            [FlowField(pred_data.reshape(16, 2)[perm].reshape(4, 4, 2))],
            FlowField(gt_data.reshape(16, 2)[perm].reshape(4, 4, 2)),
        ).total
        assert a == pytest.approx(b, abs=1e-12)

    def test_positive_homogeneity(self):
        rng = np.random.default_rng(6)
        gt = FlowField(np.zeros((3, 3, 2)))
        err = rng.standard_normal((3, 3, 2))
        l1 = flow_loss([FlowField(err)], gt).total
        l3 = flow_loss([FlowField(3.0 * err)], gt).total
        assert l3 == pytest.approx(3.0 * l1, rel=1e-12)

    def test_mask_restricts_average(self):
        gt = FlowField(np.zeros((1, 2, 2)))
        pred = FlowField(np.array([[[1.0, 0.0], [3.0, 0.0]]]))
        full = flow_loss([pred], gt).total
        masked = flow_loss([pred], gt, valid_mask=np.array([[True, False]])).total
        assert full == pytest.approx(2.0)
        assert masked == pytest.approx(1.0)

    def test_gamma_bounds(self):
        gt = make_gt()
        pred = const_pred(gt.data.shape, 1, 1, gt)
        for gamma in (0.0, -0.5, 1.0001):
            with pytest.raises(ConfigError):
                flow_loss([pred], gt, gamma=gamma)
        flow_loss([pred], gt, gamma=1.0)  # closed upper end is legal

    def test_empty_valid_set_is_an_error(self):
        gt = make_gt()
        pred = const_pred(gt.data.shape, 1, 1, gt)
        with pytest.raises(UndefinedLossError):
            flow_loss([pred], gt, valid_mask=np.zeros(gt.data.shape[:2], bool))

    def test_no_predictions_rejected(self):
        with pytest.raises(DimensionError):
            flow_loss([], make_gt())


class TestGradients:
    def test_analytic_matches_finite_differences(self):
        f1, f2, gt = draw_gradcheck_case(seed=1)
        err = gradcheck_matching_chain(f1, f2, gt)
        assert err < 1e-4

    def test_kink_free_draw_has_margin(self):
        f1, f2, gt = draw_gradcheck_case(seed=2, kink_margin=1e-3)
        from flowmatch import matching, propagation

        grid = make_coord_grid(f1.shape[0], f1.shape[1], dtype=np.float64)
        corr = matching.correlation(f1, f2)
        _, flow_raw = matching.expected_flow(
            matching.match_distribution(corr), grid
        )
        attn = propagation.self_affinity(f1)
        flow_prop = propagation.propagate(attn, flow_raw)
        margin = np.minimum(np.abs(flow_raw - gt), np.abs(flow_prop - gt)).min()
        assert margin > 1e-3

    def test_stationary_construction_has_zero_gradient(self):
        """Constant features with a balanced sign pattern sit at a
        stationary point: every gradient path cancels by symmetry."""
        h = w = 4
        d = 5
        f1 = np.full((h, w, d), 0.3)
        f2 = np.full((h, w, d), -0.1)
        grid = make_coord_grid(h, w, dtype=np.float64)
        centroid = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
        flow_raw = np.broadcast_to(centroid, (h, w, 2)) - grid
        checker = np.indices((h, w)).sum(axis=0) % 2
        delta = np.where(checker[..., None] == 0, 0.25, -0.25)
        gt = flow_raw - delta
        value, g1, g2 = chain_gradients(f1, f2, gt)
        assert value > 0
        assert np.abs(g1).max() < 1e-12
        assert np.abs(g2).max() < 1e-12
        n1, n2 = finite_difference_gradients(f1, f2, gt, eps=1e-4)
        assert np.abs(n1).max() < 1e-6
        assert np.abs(n2).max() < 1e-6

    def test_richardson_error_scaling(self):
        """Central-difference error shrinks like eps^2 on a smooth draw."""
        f1, f2, gt = draw_gradcheck_case(seed=3, kink_margin=5e-2)
        _, a1, _ = chain_gradients(f1, f2, gt)
        errs = []
        for eps in (2e-3, 1e-3):
            n1, _ = finite_difference_gradients(f1, f2, gt, eps=eps)
            errs.append(np.abs(n1 - a1).max())
        ratio = errs[0] / max(errs[1], 1e-300)
        assert 2.0 < ratio < 8.0, f"quadratic shrink expected, got {ratio}"

    def test_size_cap(self):
        f = np.zeros((7, 7, 3))
        with pytest.raises(DimensionError):
            gradcheck_matching_chain(f, f, np.zeros((7, 7, 2)))

    def test_chain_loss_value_consistency(self):
        f1, f2, gt = draw_gradcheck_case(seed=4)
        value, _, _ = chain_gradients(f1, f2, gt)
        assert value == pytest.approx(chain_loss(f1, f2, gt), abs=1e-12)
