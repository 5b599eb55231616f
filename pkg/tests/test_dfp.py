import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dfp_scalar
from rbstream.dfp import DfpWeights, conv1x1_bn_silu, dfp_fuse, dynamic_flow
from rbstream.exceptions import ShapeMismatch


def selector(channels):
    half = channels // 2
    conv = np.zeros((half, channels))
    conv[np.arange(half), np.arange(half)] = 1.0
    return DfpWeights(conv, np.zeros(half), np.ones(half), np.zeros(half))


def oracle(p_t, p_tm1, w):
    return np.array(dfp_scalar(p_t.tolist(), p_tm1.tolist(), w.conv, w.bias, w.bn_scale, w.bn_shift))


class TestConv:
    @pytest.mark.parametrize("v", [-2.0, 0.0, 0.7, 3.5])
    def test_selector_on_constant_map(self, v):
        out = conv1x1_bn_silu(np.full((6, 3, 4), v), selector(6))
        assert out.shape == (3, 3, 4)
        np.testing.assert_allclose(out, v / (1 + np.exp(-v)), rtol=0, atol=1e-15)

    def test_zero_weights(self):
        f = np.random.default_rng(0).normal(size=(4, 3, 3))
        assert np.all(conv1x1_bn_silu(f, DfpWeights.zeros(4)) == 0.0)

    def test_against_hand_loop(self):
        rng = np.random.default_rng(1)
        f = rng.normal(size=(4, 3, 3))
        w = DfpWeights.random(4, rng)
        got = conv1x1_bn_silu(f, w)
        for o in range(2):
            for y in range(3):
                for x in range(3):
                    z = w.bn_scale[o] * (w.bias[o] + sum(w.conv[o, c] * f[c, y, x] for c in range(4))) + w.bn_shift[o]
                    assert abs(got[o, y, x] - z / (1 + np.exp(-z))) < 1e-12

    @pytest.mark.parametrize("shape", [(3, 2, 2), (4, 2), (6, 2, 2)])
    def test_shape_errors(self, shape):
        with pytest.raises(ShapeMismatch):
            conv1x1_bn_silu(np.zeros(shape), DfpWeights.zeros(4))

    def test_inconsistent_weights(self):
        with pytest.raises(ShapeMismatch):
            DfpWeights(np.zeros((2, 3)), np.zeros(2), np.zeros(2), np.zeros(2))
        with pytest.raises(ShapeMismatch):
            DfpWeights(np.zeros((2, 4)), np.zeros(3), np.zeros(2), np.zeros(2))

    def test_non_finite(self):
        f = np.zeros((4, 2, 2))
        f[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            conv1x1_bn_silu(f, DfpWeights.zeros(4))


class TestFuse:
    def test_zero_weights_is_residual(self):
        p = np.random.default_rng(2).normal(size=(8, 5, 5))
        out = dfp_fuse(p, p[::-1].copy(), DfpWeights.zeros(8))
        assert np.array_equal(out, p)

    def test_same_inputs_give_equal_halves(self):
        rng = np.random.default_rng(3)
        p = rng.normal(size=(8, 5, 5))
        dyn = dynamic_flow(p, p, DfpWeights.random(8, rng))
        assert np.array_equal(dyn[:4], dyn[4:])

    @pytest.mark.parametrize("seed", range(5))
    def test_against_scalar_oracle(self, seed):
        rng = np.random.default_rng(seed)
        p_t, p_tm1 = rng.normal(size=(2, 8, 5, 5))
        w = DfpWeights.random(8, rng)
        np.testing.assert_allclose(dfp_fuse(p_t, p_tm1, w), oracle(p_t, p_tm1, w), rtol=0, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            dfp_fuse(np.zeros((4, 2, 2)), np.zeros((4, 2, 3)), DfpWeights.zeros(4))

    def test_swap_permutes_dynamic_halves(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=(2, 6, 3, 3))
        w = DfpWeights.random(6, rng)
        ab, ba = dynamic_flow(a, b, w), dynamic_flow(b, a, w)
        assert np.array_equal(ab[:3], ba[3:]) and np.array_equal(ab[3:], ba[:3])
        assert not np.allclose(dfp_fuse(a, b, w), dfp_fuse(b, a, w))

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        a, b = rng.normal(size=(2, 8, 5, 5))
        w = DfpWeights.random(8, rng)
        assert dfp_fuse(a, b, w).tobytes() == dfp_fuse(a.copy(), b.copy(), w).tobytes()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_shape_preserved(self, half, h, w_, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=(2, 2 * half, h, w_))
        out = dfp_fuse(a, b, DfpWeights.random(2 * half, rng))
        assert out.shape == a.shape and np.all(np.isfinite(out))
