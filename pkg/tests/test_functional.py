import numpy as np
import pytest

from saliencylab import functional as F
from tests.oracles import conv2d_ref, maxpool2d_ref


class TestConv2d:
    def test_scalar_kernel_scales_input(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        k = np.array([[2.0]]).reshape(1, 1, 1, 1)
        out = F.conv2d(x, k, stride=1, padding=0)
        np.testing.assert_array_equal(out[0, 0], [[2, 4], [6, 8]])

    def test_full_window_sum(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        k = np.ones((1, 1, 2, 2))
        out = F.conv2d(x, k, stride=1, padding=0)
        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == 10.0

    def test_matches_nested_loop_reference(self, rng):
        x = rng.normal(size=(1, 2, 5, 5))
        k = rng.normal(size=(3, 2, 3, 3))
        b = rng.normal(size=3)
        got = F.conv2d(x, k, b, stride=2, padding=1)
        np.testing.assert_allclose(got, conv2d_ref(x, k, b, stride=2, padding=1),
                                   rtol=1e-12)

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (3, 0)])
    def test_reference_across_geometries(self, rng, stride, padding):
        x = rng.normal(size=(2, 3, 7, 6))
        k = rng.normal(size=(4, 3, 3, 3))
        got = F.conv2d(x, k, None, stride=stride, padding=padding)
        np.testing.assert_allclose(got, conv2d_ref(x, k, None, stride, padding),
                                   rtol=1e-12)

    def test_channel_mismatch_names_dimension(self, rng):
        x = rng.normal(size=(1, 2, 4, 4))
        k = rng.normal(size=(1, 3, 3, 3))
        with pytest.raises(ValueError, match="channel count 2.*channels 3"):
            F.conv2d(x, k)

    def test_empty_output_rejected(self, rng):
        x = rng.normal(size=(1, 1, 2, 2))
        k = rng.normal(size=(1, 1, 3, 3))
        with pytest.raises(ValueError, match="output height"):
            F.conv2d(x, k, stride=1, padding=0)

    def test_backward_matches_dk_oracle(self, rng):
        # d/dk of sum(conv) equals conv of x with all-ones dout; cross-check
        # the cols-cached path against the cols-free path.
        x = rng.normal(size=(2, 2, 5, 5))
        k = rng.normal(size=(3, 2, 3, 3))
        out, cols = F.conv2d_with_cols(x, k, None, stride=2, padding=1)
        dout = rng.normal(size=out.shape)
        with_cols = F.conv2d_backward(dout, x, k, 2, 1, cols)
        without = F.conv2d_backward(dout, x, k, 2, 1)
        for a, b in zip(with_cols, without):
            np.testing.assert_allclose(a, b, rtol=1e-12)


class TestMaxPool:
    def test_two_by_two(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        out = F.maxpool2d(x, 2, 2)
        assert out[0, 0, 0, 0] == 4.0

    def test_constant_input_first_occurrence_gradient(self):
        x = np.ones((1, 1, 4, 4))
        out, idx = F.maxpool2d_with_indices(x, 2, 2)
        np.testing.assert_array_equal(out, np.ones((1, 1, 2, 2)))
        assert np.all(idx == 0)  # row-major first occurrence on ties
        dx = F.maxpool2d_backward(np.ones((1, 1, 2, 2)), x.shape, idx, 2, 2)
        expected = np.zeros((4, 4))
        expected[::2, ::2] = 1.0
        np.testing.assert_array_equal(dx[0, 0], expected)

    def test_matches_nested_loop_reference(self, rng):
        x = rng.normal(size=(1, 1, 6, 6))
        np.testing.assert_array_equal(F.maxpool2d(x, 2, 2), maxpool2d_ref(x, 2, 2))

    @pytest.mark.parametrize("window,stride", [(2, 1), (3, 2), (2, 2), (3, 3)])
    def test_reference_overlapping_windows(self, rng, window, stride):
        x = rng.normal(size=(2, 3, 7, 7))
        np.testing.assert_array_equal(F.maxpool2d(x, window, stride),
                                      maxpool2d_ref(x, window, stride))

    def test_window_too_large_rejected(self, rng):
        with pytest.raises(ValueError, match="window 5 larger"):
            F.maxpool2d(rng.normal(size=(1, 1, 4, 4)), 5, 1)


class TestDense:
    def test_basic(self):
        out = F.dense(np.array([[3.0, 4.0]]), np.array([[1.0, 2.0]]))
        assert out[0, 0] == 11.0

    def test_identity_with_zero_bias(self, rng):
        x = rng.normal(size=(3, 4))
        out = F.dense(x, np.eye(4), np.zeros(4))
        np.testing.assert_array_equal(out, x)

    def test_shape_mismatch_rejected(self, rng):
        with pytest.raises(ValueError, match="features 3 do not match"):
            F.dense(rng.normal(size=(1, 3)), rng.normal(size=(2, 4)))


class TestBatchnorm:
    def test_identity_parameters(self, rng):
        x = rng.normal(size=(2, 3, 4, 4))
        out = F.batchnorm(x, np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), eps=0.0)
        np.testing.assert_allclose(out, x)

    def test_direct_evaluation(self):
        x = np.full((1, 1, 1, 1), 5.0)
        out = F.batchnorm(x, np.array([2.0]), np.array([3.0]), np.array([1.0]),
                          np.array([4.0]), eps=0.0)
        assert out[0, 0, 0, 0] == pytest.approx(7.0)  # 2*(5-1)/2 + 3

    def test_effective_bias(self):
        beff = F.batchnorm_effective_bias(np.array([2.0]), np.array([3.0]),
                                          np.array([1.0]), np.array([4.0]), eps=0.0)
        assert beff[0] == pytest.approx(2.0)  # 3 - 2*(1/2)

    def test_nonpositive_variance_rejected(self):
        x = np.zeros((1, 1, 2, 2))
        with pytest.raises(ValueError, match="var \\+ eps must be positive"):
            F.batchnorm(x, np.ones(1), np.zeros(1), np.zeros(1),
                        np.array([-1.0]), eps=0.5)


class TestLosses:
    def test_cross_entropy_uniform(self):
        logits = np.zeros((2, 4))
        loss, grad = F.cross_entropy(logits, np.array([0, 1]))
        assert loss == pytest.approx(np.log(4))
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)

    def test_soft_cross_entropy_matched_gradient_zero(self, rng):
        logits = rng.normal(size=(3, 5))
        targets = F.softmax(logits / 2.0)
        loss, grad = F.soft_cross_entropy(logits, targets, temperature=2.0)
        entropy = -(targets * np.log(targets)).sum(axis=1).mean()
        assert loss == pytest.approx(entropy)
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_temperature_must_be_positive(self):
        with pytest.raises(ValueError, match="temperature"):
            F.soft_cross_entropy(np.zeros((1, 2)), np.full((1, 2), 0.5), 0.0)
