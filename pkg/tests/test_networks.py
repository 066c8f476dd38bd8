import numpy as np
import pytest

from oracles import conv2d_loop
from tempattn import ops
from tempattn.config import ConfigError, TrainConfig
from tempattn.gradcheck import check_gradients
from tempattn.networks import (
    Discriminator,
    GatedConv,
    Generator,
    SNLinear,
    SpectralState,
    composite,
    generator_input,
    local_crop_positions,
    spectral_normalize,
)
from tempattn.tensor import Tensor, no_grad

SMALL = TrainConfig(image_size=16, base_width=4, n_heads=2, dilations=(2,), dtype="float64")


def test_gated_conv_matches_oracle(rng):
    layer = GatedConv(3, 4, 3, rng, dtype=np.float64)
    x = rng.standard_normal((2, 6, 6, 3))
    f = conv2d_loop(x, layer.feature.weight.data, pad=1) + layer.feature.bias.data
    g = conv2d_loop(x, layer.gate.weight.data, pad=1) + layer.gate.bias.data
    expect = np.where(f > 0, f, 0.2 * f) / (1 + np.exp(-g))
    np.testing.assert_allclose(layer(Tensor(x)).data, expect, atol=1e-12)


def test_gated_conv_gradient(rng):
    layer = GatedConv(2, 3, 3, rng, dilation=2, dtype=np.float64)
    x = Tensor(rng.standard_normal((1, 6, 6, 2)), requires_grad=True)
    assert check_gradients(lambda: layer(x), [x, layer.feature.weight, layer.gate.weight, layer.gate.bias],
                           max_entries=10, rng=rng) < 1e-6


class TestSpectralNorm:
    @pytest.mark.parametrize("shape", [(5, 5, 3, 8), (40, 24), (64, 64)])
    def test_top_singular_value_near_one(self, rng, shape):
        w = Tensor(rng.standard_normal(shape))
        mat = w.data.reshape(-1, shape[-1]).T
        state = SpectralState.init(mat.shape[0], mat.shape[1], rng)
        wn = spectral_normalize(w, state, n_iter=30)
        sigma = np.linalg.svd(wn.data.reshape(-1, shape[-1]).T, compute_uv=False)[0]
        assert sigma == pytest.approx(1.0, abs=0.02)

    def test_no_update_keeps_state(self, rng):
        w = Tensor(rng.standard_normal((6, 4)))
        state = SpectralState.init(4, 6, rng)
        u0 = state.u.copy()
        spectral_normalize(w, state, update=False)
        np.testing.assert_array_equal(state.u, u0)

    def test_gradient_through_sigma(self, rng):
        w = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
        state = SpectralState.init(3, 5, rng)
        spectral_normalize(w, state, n_iter=5)
        wt = Tensor(rng.standard_normal((5, 3)))
        assert check_gradients(lambda: ops.mul(spectral_normalize(w, state, update=False), wt), [w]) < 1e-6

    def test_linear_buffers_in_state_dict(self, rng):
        layer = SNLinear(4, 2, rng)
        assert {"buffer:sn_u", "buffer:sn_v"} <= set(layer.state_dict())


class TestGenerator:
    def test_shapes_and_range(self, rng):
        g = Generator(SMALL, rng, np.float64)
        x = Tensor(rng.uniform(-1, 1, (2, 16, 16, 3)))
        mask = np.zeros((2, 16, 16), dtype=np.uint8)
        mask[:, 4:10, 4:10] = 1
        with no_grad():
            i_c, i_out, t = g(x, mask)
        assert i_c.shape == i_out.shape == (2, 16, 16, 3)
        assert np.abs(i_out.data).max() <= 1.0 and t.shape == (2, 2) and np.all(t.data > 0)

    def test_sketch_mode_takes_five_channels(self, rng):
        cfg = SMALL.replace(sketch_guided=True)
        g = Generator(cfg, rng, np.float64)
        assert g.coarse.encoder.layers[0].feature.weight.shape[2] == 5
        x = Tensor(np.zeros((1, 16, 16, 3)))
        mask = np.zeros((1, 16, 16), dtype=np.uint8)
        mask[0, 2:8, 2:8] = 1
        with no_grad():
            g(x, mask, sketch=np.zeros((1, 16, 16)))

    def test_size_not_divisible(self, rng):
        g = Generator(SMALL, rng, np.float64)
        with pytest.raises(ConfigError):
            g(Tensor(np.zeros((1, 18, 18, 3))), np.zeros((1, 18, 18)))

    def test_end_to_end_gradient(self, rng):
        cfg = SMALL.replace(base_width=2, dilations=())
        g = Generator(cfg, rng, np.float64)
        x = Tensor(rng.uniform(-1, 1, (1, 16, 16, 3)))
        mask = np.zeros((1, 16, 16), dtype=np.uint8)
        mask[0, 8:12, 8:12] = 1
        wrt = [g.refine.attention.temperature.fc_w, g.refine.attention.embed[1], g.coarse.mid.gate.weight]
        err = check_gradients(lambda: g(x, mask)[1], wrt, h=1e-5, max_entries=6, rng=rng)
        assert err < 1e-4


def test_composite_and_input(rng):
    a, b = Tensor(np.ones((1, 2, 2, 3))), Tensor(np.zeros((1, 2, 2, 3)))
    mask = np.array([[[1, 0], [0, 1]]])
    out = composite(a, b, mask).data[..., 0]
    np.testing.assert_array_equal(out, mask)
    assert generator_input(b, mask).shape == (1, 2, 2, 4)
    assert generator_input(b, mask, mask).shape == (1, 2, 2, 5)


class TestDiscriminator:
    def test_logit_shape(self, rng):
        d = Discriminator(TrainConfig(image_size=32, base_width=4), rng, np.float64)
        assert d.crop == 16
        out = d(Tensor(rng.uniform(-1, 1, (3, 32, 32, 3))), [0, 4, 16], [0, 8, 16], update=True)
        assert out.shape == (3,)

    def test_gradient(self, rng):
        d = Discriminator(TrainConfig(image_size=16, base_width=2), rng, np.float64)
        x = Tensor(rng.uniform(-1, 1, (2, 16, 16, 3)), requires_grad=True)
        d(x, [0, 8], [0, 8], update=True)
        err = check_gradients(lambda: d(x, [0, 8], [0, 8]), [x, d.global_convs[0].weight, d.head.weight],
                              max_entries=8, rng=rng)
        assert err < 1e-5

    def test_crop_positions_cover_hole(self, rng):
        mask = np.zeros((1, 32, 32), dtype=np.uint8)
        mask[0, 20:24, 2:6] = 1
        for _ in range(20):
            (t,), (l,) = local_crop_positions(mask, 1, 32, 32, 16, rng)
            assert 0 <= t <= 16 and 0 <= l <= 16
            assert t <= 20 and t + 16 >= 24 - 8 and l <= 6
