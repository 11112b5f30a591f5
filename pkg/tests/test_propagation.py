"""Self-similarity flow propagation: fixed points, convexity, averaging."""

import numpy as np
import pytest

from flowmatch.errors import DimensionError, NumericError
from flowmatch.propagation import propagate, propagate_field, self_affinity


def random_row_stochastic(rng, n):
    m = rng.random((n, n)) + 1e-3
    return m / m.sum(axis=1, keepdims=True)


class TestSelfAffinity:
    def test_rows_stochastic(self, rng):
        f = rng.standard_normal((3, 4, 6))
        a = self_affinity(f)
        assert a.shape == (12, 12)
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)

    def test_symmetric_logits(self, rng):
        """F F^T is symmetric, so A[i,j]/A[i,i] mirrors A[j,i]/A[j,j]."""
        f = rng.standard_normal((2, 3, 5))
        a = self_affinity(f)
        flat = f.reshape(6, 5)
        logits = flat @ flat.T / np.sqrt(5)
        np.testing.assert_allclose(logits, logits.T, atol=1e-12)
        # row softmax of a symmetric matrix: ratios within a row match the
        # transposed ratios across rows
        np.testing.assert_allclose(
            a[0, 1] / a[0, 0], np.exp(logits[0, 1] - logits[0, 0]), atol=1e-9
        )

    def test_uniform_features_give_uniform_affinity(self):
        f = np.ones((2, 2, 3))
        a = self_affinity(f)
        np.testing.assert_allclose(a, 0.25, atol=1e-12)


class TestPropagate:
    def test_constant_field_fixed_point(self, rng):
        """Row-stochastic mixing cannot alter a constant flow field."""
        flow = np.broadcast_to(np.array([2.5, -1.25]), (4, 5, 2)).copy()
        attn = random_row_stochastic(rng, 20)
        out = propagate(attn, flow)
        np.testing.assert_allclose(out, flow, atol=1e-12)

    def test_identity_attention_is_identity(self, rng):
        flow = rng.standard_normal((3, 3, 2))
        out = propagate(np.eye(9), flow)
        np.testing.assert_allclose(out, flow, atol=0)

    def test_uniform_attention_averages(self, rng):
        flow = rng.standard_normal((2, 3, 2))
        attn = np.full((6, 6), 1.0 / 6.0)
        out = propagate(attn, flow)
        mean = flow.reshape(6, 2).mean(axis=0)
        np.testing.assert_allclose(out, np.broadcast_to(mean, out.shape), atol=1e-12)

    def test_convex_combination_bound_100_seeds(self):
        """Each output component stays inside the input's min/max."""
        for seed in range(100):
            rng = np.random.default_rng(seed)
            h, w = rng.integers(2, 7, size=2)
            n = h * w
            attn = random_row_stochastic(rng, n)
            flow = rng.standard_normal((h, w, 2)) * 10.0
            out = propagate(attn, flow)
            for c in range(2):
                assert out[..., c].min() >= flow[..., c].min() - 1e-6
                assert out[..., c].max() <= flow[..., c].max() + 1e-6

    def test_rejects_row_count_mismatch(self, rng):
        with pytest.raises(DimensionError):
            propagate(np.eye(5), rng.standard_normal((2, 3, 2)))

    def test_rejects_non_stochastic(self, rng):
        attn = np.eye(4) * 1.5
        with pytest.raises(NumericError):
            propagate(attn, rng.standard_normal((2, 2, 2)))


class TestPropagateField:
    def test_end_to_end_shapes_and_convexity(self, rng):
        f1 = rng.standard_normal((4, 4, 8)).astype(np.float32)
        flow = rng.standard_normal((4, 4, 2)).astype(np.float32)
        res = propagate_field(f1, flow)
        assert res.flow_prop.shape == (4, 4, 2)
        assert res.attn.shape == (16, 16)
        for c in range(2):
            assert res.flow_prop[..., c].min() >= flow[..., c].min() - 1e-5
            assert res.flow_prop[..., c].max() <= flow[..., c].max() + 1e-5

    def test_sharp_self_features_preserve_flow(self):
        """Near-one-hot self-affinity leaves the raw flow almost unchanged."""
        n, d = 9, 9
        f1 = (np.eye(n, d) * 60.0).reshape(3, 3, d).astype(np.float32)
        flow = np.arange(18, dtype=np.float32).reshape(3, 3, 2)
        res = propagate_field(f1, flow)
        np.testing.assert_allclose(res.flow_prop, flow, atol=1e-4)
