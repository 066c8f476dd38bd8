"""Coarse network, refinement network and spectrally normalised global-local discriminator.

All widths derive from ``base_width``; images are NHWC in ``[-1, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .attention import MHTMA
from .config import ConfigError, TrainConfig
from .module import Module, param
from .tensor import Tensor, as_tensor


# ---------------------------------------------------------------------------
# layers


class Conv(Module):
    """Plain convolution with bias and "same" padding for odd kernels."""

    def __init__(self, cin: int, cout: int, k: int, rng: np.random.Generator, stride: int = 1,
                 dilation: int = 1, dtype=np.float32, zero: bool = False, gain: float = 2.0):
        std = 0.0 if zero else np.sqrt(gain / (k * k * cin))
        self.weight = param(rng.normal(0.0, 1.0, (k, k, cin, cout)) * std, dtype)
        self.bias = param(np.zeros(cout), dtype)
        self.stride = stride
        self.dilation = dilation
        self.pad = dilation * (k - 1) // 2

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.conv2d(x, self.weight, self.stride, self.dilation, self.pad)
        return ops.add(y, self.bias)


class GatedConv(Module):
    """``act(conv_f(x)) * sigmoid(conv_g(x))`` with feature and gate kernels of equal geometry."""

    def __init__(self, cin: int, cout: int, k: int, rng: np.random.Generator, stride: int = 1,
                 dilation: int = 1, slope: float | None = 0.2, dtype=np.float32):
        # the gate sits near 0.5 at init; gain 2 / 0.5**2 keeps activation variance from decaying per layer
        self.feature = Conv(cin, cout, k, rng, stride, dilation, dtype, gain=8.0)
        self.gate = Conv(cin, cout, k, rng, stride, dilation, dtype, gain=1.0)
        self.slope = slope

    def __call__(self, x: Tensor) -> Tensor:
        return gated_conv(x, self)


def gated_conv(x: Tensor, layer: GatedConv) -> Tensor:
    f = layer.feature(x)
    if layer.slope is not None:
        f = ops.leaky_relu(f, layer.slope)
    return ops.mul(f, ops.sigmoid(layer.gate(x)))


@dataclass
class SpectralState:
    """Power-iteration vectors for one weight; ``u`` spans outputs, ``v`` the rest."""

    u: np.ndarray
    v: np.ndarray

    @classmethod
    def init(cls, n_out: int, n_in: int, rng: np.random.Generator) -> "SpectralState":
        u = rng.normal(size=n_out)
        v = rng.normal(size=n_in)
        return cls(u / np.linalg.norm(u), v / np.linalg.norm(v))


def _as_matrix(w: np.ndarray) -> np.ndarray:
    # HWIO kernels and (in, out) FC weights both keep outputs on the last axis
    return w.reshape(-1, w.shape[-1]).T


def power_iteration(w: np.ndarray, state: SpectralState, n_iter: int = 1, eps: float = 1e-12) -> None:
    mat = _as_matrix(np.asarray(w, dtype=np.float64))
    u, v = state.u, state.v
    for _ in range(n_iter):
        v = mat.T @ u
        v = v / max(np.linalg.norm(v), eps)
        u = mat @ v
        u = u / max(np.linalg.norm(u), eps)
    state.u[...] = u
    state.v[...] = v


def spectral_normalize(w: Tensor, state: SpectralState, update: bool = True, n_iter: int = 1,
                       eps: float = 1e-12) -> Tensor:
    """``w / sigma`` with ``sigma = u^T W v`` after ``n_iter`` power-iteration updates."""
    if update:
        power_iteration(w.data, state, n_iter, eps)
    n_out = w.shape[-1]
    mat = ops.swap_last(ops.reshape(w, (-1, n_out)))  # n_out x rest
    u = Tensor(state.u.reshape(1, n_out).astype(w.dtype))
    v = Tensor(state.v.reshape(-1, 1).astype(w.dtype))
    sigma = ops.reshape(ops.matmul(u, ops.matmul(mat, v)), ())
    if abs(float(sigma.data)) < eps:
        sigma = Tensor(np.asarray(eps, dtype=w.dtype))
    return ops.div(w, sigma)


class SNConv(Module):
    def __init__(self, cin: int, cout: int, k: int, rng: np.random.Generator, stride: int = 1,
                 dtype=np.float32, eps: float = 1e-12):
        self.weight = param(rng.normal(0.0, np.sqrt(2.0 / (k * k * cin)), (k, k, cin, cout)), dtype)
        self.bias = param(np.zeros(cout), dtype)
        self.sn = SpectralState.init(cout, k * k * cin, rng)
        self.stride = stride
        self.pad = (k - 1) // 2
        self.eps = eps

    def buffers(self):
        return {"sn_u": self.sn.u, "sn_v": self.sn.v}

    def __call__(self, x: Tensor, update: bool = False) -> Tensor:
        w = spectral_normalize(self.weight, self.sn, update, eps=self.eps)
        return ops.add(ops.conv2d(x, w, self.stride, 1, self.pad), self.bias)


class SNLinear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32, eps: float = 1e-12):
        self.weight = param(rng.normal(0.0, np.sqrt(1.0 / n_in), (n_in, n_out)), dtype)
        self.bias = param(np.zeros(n_out), dtype)
        self.sn = SpectralState.init(n_out, n_in, rng)
        self.eps = eps

    def buffers(self):
        return {"sn_u": self.sn.u, "sn_v": self.sn.v}

    def __call__(self, x: Tensor, update: bool = False) -> Tensor:
        w = spectral_normalize(self.weight, self.sn, update, eps=self.eps)
        return ops.add(ops.matmul(x, w), self.bias)


# ---------------------------------------------------------------------------
# generator


def _mask_channels(mask: np.ndarray, channels: int, dtype) -> Tensor:
    m = np.asarray(mask, dtype=dtype)[..., None]
    return Tensor(np.broadcast_to(m, m.shape[:-1] + (channels,)).copy())


def composite(generated: Tensor, known: Tensor, mask: np.ndarray) -> Tensor:
    """``generated * M + known * (1 - M)`` for an ``N x H x W`` hole mask."""
    m = _mask_channels(mask, generated.shape[-1], generated.dtype)
    keep = Tensor(1.0 - m.data)
    return ops.add(ops.mul(generated, m), ops.mul(known, keep))


def generator_input(image: Tensor, mask: np.ndarray, sketch: np.ndarray | None = None) -> Tensor:
    chans = [image, _mask_channels(mask, 1, image.dtype)]
    if sketch is not None:
        chans.append(_mask_channels(sketch, 1, image.dtype))
    return ops.concat(chans, axis=-1)


class _Encoder(Module):
    """Gated 5x5 stem, two stride-2 gated downsamplings, optional dilated middle."""

    def __init__(self, cin: int, width: int, dilations, rng, slope, dtype):
        w = width
        self.layers = [
            GatedConv(cin, w, 5, rng, slope=slope, dtype=dtype),
            GatedConv(w, 2 * w, 3, rng, stride=2, slope=slope, dtype=dtype),
            GatedConv(2 * w, 2 * w, 3, rng, slope=slope, dtype=dtype),
            GatedConv(2 * w, 4 * w, 3, rng, stride=2, slope=slope, dtype=dtype),
            GatedConv(4 * w, 4 * w, 3, rng, slope=slope, dtype=dtype),
        ]
        self.layers += [GatedConv(4 * w, 4 * w, 3, rng, dilation=d, slope=slope, dtype=dtype) for d in dilations]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class _Decoder(Module):
    """Five gated convolutions with two nearest-neighbour upsamplings, then a tanh convolution."""

    def __init__(self, cin: int, width: int, rng, slope, dtype, zero_last: bool = False):
        w = width
        self.g1 = GatedConv(cin, 4 * w, 3, rng, slope=slope, dtype=dtype)
        self.g2 = GatedConv(4 * w, 2 * w, 3, rng, slope=slope, dtype=dtype)
        self.g3 = GatedConv(2 * w, 2 * w, 3, rng, slope=slope, dtype=dtype)
        self.g4 = GatedConv(2 * w, w, 3, rng, slope=slope, dtype=dtype)
        self.g5 = GatedConv(w, max(w // 2, 1), 3, rng, slope=slope, dtype=dtype)
        self.out = Conv(max(w // 2, 1), 3, 3, rng, dtype=dtype, zero=zero_last, gain=1.0)

    def __call__(self, x: Tensor) -> Tensor:
        x = self.g1(x)
        x = self.g2(ops.upsample_nearest(x, 2))
        x = self.g3(x)
        x = self.g4(ops.upsample_nearest(x, 2))
        x = self.g5(x)
        return ops.tanh(self.out(x))


def _check_size(h: int, w: int) -> None:
    if h % 4 or w % 4:
        raise ConfigError(f"image size {h}x{w} must be divisible by 4")


class CoarseNet(Module):
    def __init__(self, cfg: TrainConfig, rng: np.random.Generator, dtype=np.float32, zero_last: bool = False):
        w = cfg.base_width
        self.encoder = _Encoder(cfg.in_channels, w, cfg.dilations, rng, cfg.gen_slope, dtype)
        self.mid = GatedConv(4 * w, 4 * w, 3, rng, slope=cfg.gen_slope, dtype=dtype)
        self.decoder = _Decoder(4 * w, w, rng, cfg.gen_slope, dtype, zero_last)

    def __call__(self, x: Tensor) -> Tensor:
        _check_size(*x.shape[1:3])
        return self.decoder(self.mid(self.encoder(x)))


class RefineNet(Module):
    """Dilated convolution branch and attention branch, fused by one decoder."""

    def __init__(self, cfg: TrainConfig, rng: np.random.Generator, dtype=np.float32, zero_last: bool = False):
        w = cfg.base_width
        slope = cfg.gen_slope
        self.conv_branch = _Encoder(cfg.in_channels, w, cfg.dilations, rng, slope, dtype)
        self.attn_encoder = _Encoder(cfg.in_channels, w, (), rng, slope, dtype)
        self.attention = MHTMA.uniform(4 * w, cfg.n_heads, rng, patch_size=cfg.patch_size,
                                       lambda_m=cfg.lambda_m, key_stride=cfg.key_stride, dtype=dtype,
                                       softplus_form=cfg.softplus_form, embed_slope=cfg.embed_slope,
                                       temperature_floor=cfg.temperature_floor)
        self.attn_post = [GatedConv(4 * w, 4 * w, 3, rng, slope=slope, dtype=dtype) for _ in range(2)]
        self.decoder = _Decoder(8 * w, w, rng, slope, dtype, zero_last)

    def __call__(self, x: Tensor, mask: np.ndarray, branches=("conv", "attention")):
        """Returns the raw output image and the ``N x K`` temperatures used."""
        _check_size(*x.shape[1:3])
        conv_feat = self.conv_branch(x)
        a = self.attn_encoder(x)
        a, _, temps = self.attention(a, mask, return_states=True)
        for layer in self.attn_post:
            a = layer(a)
        if "conv" not in branches:
            conv_feat = Tensor(np.zeros_like(conv_feat.data))
        if "attention" not in branches:
            a = Tensor(np.zeros_like(a.data))
        return self.decoder(ops.concat([conv_feat, a], axis=-1)), temps


class Generator(Module):
    def __init__(self, cfg: TrainConfig, rng: np.random.Generator, dtype=np.float32):
        self.coarse = CoarseNet(cfg, rng, dtype)
        self.refine = RefineNet(cfg, rng, dtype)

    def __call__(self, image_in: Tensor, mask: np.ndarray, sketch=None, branches=("conv", "attention")):
        """Coarse output, raw refined output and temperatures for mean-filled input images."""
        i_c = coarse_forward(image_in, mask, self, sketch)
        i_out, temps = refine_forward(i_c, image_in, mask, self, sketch, branches)
        return i_c, i_out, temps


def coarse_forward(i_in: Tensor, mask: np.ndarray, params: Generator, sketch=None) -> Tensor:
    return params.coarse(generator_input(as_tensor(i_in), mask, sketch))


def refine_forward(i_c: Tensor, i_in: Tensor, mask: np.ndarray, params: Generator, sketch=None,
                   branches=("conv", "attention")):
    x = composite(i_c, as_tensor(i_in), mask)
    return params.refine(generator_input(x, mask, sketch), mask, branches)


# ---------------------------------------------------------------------------
# discriminator


def _conv_out(n: int, k: int = 5, stride: int = 2) -> int:
    return (n + 2 * ((k - 1) // 2) - k) // stride + 1


class Discriminator(Module):
    """Global branch (6 convs + FC) and local branch (5 convs + FC) joined by an FC logit."""

    def __init__(self, cfg: TrainConfig, rng: np.random.Generator, dtype=np.float32):
        w = cfg.base_width
        widths_g = [w, 2 * w, 4 * w, 4 * w, 4 * w, 4 * w]
        widths_l = widths_g[:5]
        self.crop = max(1, int(round(cfg.local_crop_fraction * cfg.image_size)))
        if self.crop > cfg.image_size:
            raise ConfigError("local crop larger than the image")
        eps = cfg.sn_eps
        self.global_convs = [SNConv(ci, co, 5, rng, 2, dtype, eps) for ci, co in zip([3] + widths_g[:-1], widths_g)]
        self.local_convs = [SNConv(ci, co, 5, rng, 2, dtype, eps) for ci, co in zip([3] + widths_l[:-1], widths_l)]
        g_side, l_side = cfg.image_size, self.crop
        for _ in widths_g:
            g_side = _conv_out(g_side)
        for _ in widths_l:
            l_side = _conv_out(l_side)
        features = 4 * w
        self.global_fc = SNLinear(g_side * g_side * widths_g[-1], features, rng, dtype, eps)
        self.local_fc = SNLinear(l_side * l_side * widths_l[-1], features, rng, dtype, eps)
        self.head = SNLinear(2 * features, 1, rng, dtype, eps)
        self.slope = cfg.disc_slope

    def _branch(self, x: Tensor, convs, fc, update: bool) -> Tensor:
        for conv in convs:
            x = ops.leaky_relu(conv(x, update), self.slope)
        flat = ops.reshape(x, (x.shape[0], -1))
        return ops.leaky_relu(fc(flat, update), self.slope)

    def __call__(self, image: Tensor, tops, lefts, update: bool = False) -> Tensor:
        """Raw logits, one per image."""
        g = self._branch(image, self.global_convs, self.global_fc, update)
        local = ops.crop(image, tops, lefts, self.crop)
        l_feat = self._branch(local, self.local_convs, self.local_fc, update)
        logit = self.head(ops.concat([g, l_feat], axis=-1), update)
        return ops.reshape(logit, (image.shape[0],))


def local_crop_positions(mask: np.ndarray | None, n: int, h: int, w: int, size: int,
                         rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """Crop corners centred on a random point of each hole's bounding box (uniform without a hole)."""
    if size > h or size > w:
        raise ConfigError(f"crop {size} larger than image {h}x{w}")
    tops, lefts = [], []
    for i in range(n):
        ys = xs = None
        if mask is not None:
            ys, xs = np.nonzero(np.asarray(mask)[i])
        if ys is not None and len(ys):
            cy = rng.integers(ys.min(), ys.max() + 1)
            cx = rng.integers(xs.min(), xs.max() + 1)
            tops.append(int(np.clip(cy - size // 2, 0, h - size)))
            lefts.append(int(np.clip(cx - size // 2, 0, w - size)))
        else:
            tops.append(int(rng.integers(0, h - size + 1)))
            lefts.append(int(rng.integers(0, w - size + 1)))
    return tops, lefts


def discriminator_forward(image: Tensor, crop_seed, params: Discriminator, mask=None, update: bool = False) -> Tensor:
    image = as_tensor(image)
    n, h, w, _ = image.shape
    tops, lefts = local_crop_positions(mask, n, h, w, params.crop, np.random.default_rng(crop_seed))
    return params(image, tops, lefts, update)
