import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import conv2d_loop, conv_transpose2d_loop, fold_average_loop, patches_by_slicing
from tempattn import ops
from tempattn.gradcheck import check_gradients
from tempattn.tensor import Tensor, no_grad


def _t(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


class TestConvolution:
    @pytest.mark.parametrize("stride,dilation,pad", [(1, 1, 0), (1, 1, 1), (2, 1, 2), (1, 2, 2), (2, 2, 1)])
    def test_conv2d_matches_loop(self, rng, stride, dilation, pad):
        x = rng.standard_normal((2, 7, 6, 3))
        k = rng.standard_normal((3, 3, 3, 4))
        got = ops.conv2d(Tensor(x), Tensor(k), stride, dilation, pad).data
        np.testing.assert_allclose(got, conv2d_loop(x, k, stride, dilation, pad), atol=1e-12)

    @pytest.mark.parametrize("pad", [0, 1])
    def test_conv_transpose_matches_scatter(self, rng, pad):
        x = rng.standard_normal((2, 5, 4, 3))
        k = rng.standard_normal((3, 3, 2, 3))
        got = ops.conv_transpose2d(Tensor(x), Tensor(k), pad).data
        np.testing.assert_allclose(got, conv_transpose2d_loop(x, k, pad), atol=1e-12)

    def test_transpose_is_adjoint_of_conv(self, rng):
        # <conv(x), y> == <x, conv_T(y)> for the same kernel
        x = rng.standard_normal((1, 6, 6, 2))
        k = rng.standard_normal((3, 3, 2, 4))
        y = rng.standard_normal((1, 6, 6, 4))
        lhs = (ops.conv2d(Tensor(x), Tensor(k), pad=1).data * y).sum()
        rhs = (x * ops.conv_transpose2d(Tensor(y), Tensor(k), pad=1).data).sum()
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ops.ShapeError):
            ops.conv2d(Tensor(np.zeros((1, 4, 4, 2))), Tensor(np.zeros((3, 3, 3, 1))))

    def test_gradients(self, rng):
        x, k = _t(rng, 1, 6, 5, 2), _t(rng, 3, 3, 2, 3)
        assert check_gradients(lambda: ops.conv2d(x, k, 2, 1, 1), [x, k]) < 1e-6
        assert check_gradients(lambda: ops.conv2d(x, k, 1, 2, 2), [x, k]) < 1e-6
        kt = _t(rng, 3, 3, 2, 2)
        assert check_gradients(lambda: ops.conv_transpose2d(x, kt, 1), [x, kt]) < 1e-6


class TestPatches:
    @pytest.mark.parametrize("size,stride,pad", [(1, 1, 0), (3, 1, 1), (3, 1, 0), (3, 2, 0), (5, 3, 2)])
    def test_extract_matches_slicing(self, rng, size, stride, pad):
        x = rng.standard_normal((2, 7, 8, 3))
        got = ops.extract_patches(Tensor(x), size, stride, pad).data
        np.testing.assert_array_equal(got, patches_by_slicing(x, size, stride, pad))

    @pytest.mark.parametrize("size", [1, 3, 5])
    def test_fold_average_matches_loop(self, rng, size):
        h, w, c = 5, 6, 2
        p = rng.standard_normal((2, h * w, size * size * c))
        got = ops.fold_average(Tensor(p), h, w, size).data
        np.testing.assert_allclose(got, fold_average_loop(p, h, w, size), atol=1e-12)

    @given(h=st.integers(3, 8), w=st.integers(3, 8), size=st.sampled_from([1, 3, 5]))
    def test_fold_inverts_unfold(self, h, w, size):
        # rolling the unrolled patches of a cube returns the cube
        x = np.random.default_rng(h * 31 + w).standard_normal((1, h, w, 2))
        pad = (size - 1) // 2
        p = ops.extract_patches(Tensor(x), size, 1, pad)
        np.testing.assert_allclose(ops.fold_average(p, h, w, size).data[0][pad:h - pad or None, pad:w - pad or None],
                                   x[0][pad:h - pad or None, pad:w - pad or None], atol=1e-12)

    def test_overlap_count_interior(self):
        cnt = ops.overlap_count(6, 6, 3)[..., 0]
        assert cnt[2, 2] == 9 and cnt[0, 0] == 4 and cnt[0, 2] == 6

    def test_gradients(self, rng):
        x = _t(rng, 1, 5, 5, 2)
        assert check_gradients(lambda: ops.extract_patches(x, 3, 2, 1), [x]) < 1e-6
        p = _t(rng, 1, 12, 18)
        assert check_gradients(lambda: ops.fold_average(p, 3, 4, 3), [p]) < 1e-6


class TestElementwise:
    def test_softplus_printed_form(self):
        x = np.array([-3.0, 0.0, 2.0, 800.0])
        out = ops.softplus_paper(Tensor(x)).data
        np.testing.assert_allclose(out[:3], np.log1p(np.exp(-x[:3])), rtol=1e-14)
        assert out[3] > 0.0

    def test_softplus_conventional(self):
        x = np.array([-800.0, -1.0, 0.0, 30.0])
        out = ops.softplus(Tensor(x)).data
        np.testing.assert_allclose(out[1:], np.log1p(np.exp(x[1:])), rtol=1e-14)
        assert out[0] > 0.0

    def test_sigmoid_is_stable(self):
        out = ops.sigmoid(Tensor(np.array([-1000.0, 0.0, 1000.0]))).data
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0])

    @pytest.mark.parametrize("fn", [ops.sigmoid, ops.tanh, ops.exp, ops.softplus_paper, ops.softplus,
                                    lambda x: ops.leaky_relu(x, 0.2), ops.abs])
    def test_unary_gradients(self, rng, fn):
        x = _t(rng, 3, 4)
        x.data += np.sign(x.data) * 0.05  # keep away from kinks
        assert check_gradients(lambda: fn(x), [x]) < 1e-6

    def test_binary_gradients(self, rng):
        a, b, c = _t(rng, 2, 3, 4), _t(rng, 2, 3, 4), _t(rng, 4)
        b.data = np.abs(b.data) + 0.5
        assert check_gradients(lambda: ops.div(ops.mul(a, c), b), [a, b, c]) < 1e-6
        assert check_gradients(lambda: ops.sub(ops.add(a, c), b), [a, b, c]) < 1e-6
        s = Tensor(np.array([1.7]), requires_grad=True)
        assert check_gradients(lambda: ops.div(a, s), [a, s]) < 1e-6

    def test_broadcast_is_restricted(self):
        with pytest.raises(ops.ShapeError):
            ops.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 1))))


class TestLinearAlgebra:
    def test_matmul_gradient(self, rng):
        a, b = _t(rng, 2, 3, 4), _t(rng, 2, 4, 5)
        assert check_gradients(lambda: ops.matmul(a, b), [a, b]) < 1e-6

    def test_matmul_mismatch(self):
        with pytest.raises(ops.ShapeError):
            ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    @given(arrays(np.float64, (3, 5), elements=st.floats(-50, 50)))
    def test_softmax_rows_sum_to_one(self, x):
        out = ops.softmax_rows(Tensor(x)).data
        assert np.all(out >= 0)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)

    def test_softmax_rejects_nan(self):
        with pytest.raises(ops.NumericError):
            ops.softmax_rows(Tensor(np.array([[0.0, np.nan]])))

    def test_l2_normalize_zero_row(self):
        out = ops.l2_normalize_rows(Tensor(np.array([[3.0, 4.0], [0.0, 0.0]]))).data
        np.testing.assert_allclose(out, [[0.6, 0.8], [0.0, 0.0]])

    def test_softmax_and_normalize_gradients(self, rng):
        x = _t(rng, 2, 3, 6)
        wt = Tensor(rng.standard_normal((2, 3, 6)))
        assert check_gradients(lambda: ops.mul(ops.softmax_rows(x), wt), [x]) < 1e-6
        assert check_gradients(lambda: ops.mul(ops.l2_normalize_rows(x), wt), [x]) < 1e-6


class TestShapes:
    def test_pool_and_upsample_gradients(self, rng):
        x = _t(rng, 2, 3, 4, 3)
        assert check_gradients(lambda: ops.pool_global(x, "mean"), [x]) < 1e-6
        assert check_gradients(lambda: ops.pool_global(x, "max"), [x]) < 1e-6
        assert check_gradients(lambda: ops.upsample_nearest(x, 2), [x]) < 1e-6

    def test_crop_concat_slice_gradients(self, rng):
        x = _t(rng, 2, 6, 6, 3)
        y = _t(rng, 2, 6, 6, 2)
        assert check_gradients(lambda: ops.crop(x, [0, 2], [1, 3], 3), [x]) < 1e-6
        assert check_gradients(lambda: ops.slice_last(ops.concat([x, y]), 2, 4), [x, y]) < 1e-6
        assert check_gradients(lambda: ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (2, -1)), [x]) < 1e-6
        assert check_gradients(lambda: ops.sum(x, axis=1), [x]) < 1e-6

    def test_crop_too_large(self):
        with pytest.raises(ops.ShapeError):
            ops.crop(Tensor(np.zeros((1, 4, 4, 1))), [0], [0], 5)


class TestTape:
    def test_no_grad_builds_no_graph(self, rng):
        x = _t(rng, 3)
        with no_grad():
            y = ops.mul(x, x)
        assert not y.requires_grad

    def test_shared_subexpression_accumulates(self):
        x = Tensor(np.array([3.0]), requires_grad=True)
        y = ops.mul(x, x)
        ops.add(y, y).backward(np.ones(1))
        np.testing.assert_allclose(x.grad, [12.0])

    def test_integer_data_promoted_to_float(self):
        assert Tensor(np.arange(3)).dtype == np.float64
