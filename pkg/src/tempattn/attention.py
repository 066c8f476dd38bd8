"""Multi-head temperature masked self-attention and the contextual-attention baseline.

Feature cubes are NHWC. Each head embeds the input channels with its own
linear map, unrolls query patches (zero padded, one per pixel) and key/value
patches (unpadded), scores queries against keys by cosine similarity, pins
hole-contaminated keys to ``-lambda_m``, divides valid scores by the head's
temperature, and rolls the attention-weighted value patches back into a
cube. Head outputs are concatenated along channels.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import ops
from .masks import MaskArtifacts
from .module import Module, param
from .tensor import Tensor, as_tensor, make_result, no_grad

TEMPERATURE_CEILING = 1e6
# below this the softmax is already one-hot, while float32 gradients in t blow up
TEMPERATURE_FLOOR = 1e-4


class DegenerateMaskError(ValueError):
    """No valid key patch exists for some image."""


class DegenerateMaskWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class HeadConfig:
    patch_size: int = 3
    c_embed: int = 16
    lambda_m: float = 1e4
    key_stride: int = 1

    def __post_init__(self):
        if self.patch_size < 1 or self.patch_size % 2 == 0:
            raise ValueError(f"patch size must be odd and positive, got {self.patch_size}")
        if self.c_embed < 1:
            raise ValueError("c_embed must be positive")
        if not self.lambda_m > 0:
            raise ValueError("lambda_m must be positive")
        if self.key_stride < 1:
            raise ValueError("key_stride must be positive")

    @property
    def pad(self) -> int:
        return (self.patch_size - 1) // 2


@dataclass
class PatchMatrices:
    q: Tensor  # N x N_q x D
    k: Tensor  # N x N_k x D
    v: Tensor  # N x N_k x D


@dataclass
class AttentionState:
    scores: Tensor
    masked: Tensor
    weights: Tensor
    patches: Tensor


# ---------------------------------------------------------------------------
# single-head building blocks


def embed_channels(f_in: Tensor, weight: Tensor) -> Tensor:
    """Per-pixel linear map ``C -> C'``."""
    n, h, w, c = f_in.shape
    if weight.shape[0] != c:
        raise ops.ShapeError(f"embedding expects {weight.shape[0]} channels, got {c}")
    flat = ops.reshape(f_in, (n * h * w, c))
    return ops.reshape(ops.matmul(flat, weight), (n, h, w, weight.shape[1]))


def unroll(f_e: Tensor, cfg: HeadConfig) -> PatchMatrices:
    s = cfg.patch_size
    h, w = f_e.shape[1:3]
    if h < s or w < s:
        raise ops.ShapeError(f"feature map {h}x{w} smaller than patch size {s}")
    q = ops.extract_patches(f_e, s, stride=1, pad=cfg.pad)
    k = ops.extract_patches(f_e, s, stride=cfg.key_stride, pad=0)
    return PatchMatrices(q=q, k=k, v=k)


def attention_scores(p: PatchMatrices) -> Tensor:
    """Cosine similarity of every query row with every key row."""
    return ops.matmul(ops.l2_normalize_rows(p.q), ops.swap_last(ops.l2_normalize_rows(p.k)))


def mask_scores(s: Tensor, m_prime, t, lambda_m: float) -> Tensor:
    """``M' * (S / t + lambda_m) - lambda_m`` with ``M'`` the broadcast validity vector.

    ``s`` is ``N x N_q x N_k`` (or ``N_q x N_k``); ``t`` holds one temperature
    per image (or a scalar).
    """
    s = as_tensor(s)
    squeeze = s.ndim == 2
    sd = s.data[None] if squeeze else s.data
    n = sd.shape[0]
    m = np.asarray(m_prime, dtype=sd.dtype).reshape(n, 1, sd.shape[-1])
    t = t if isinstance(t, Tensor) else Tensor(np.asarray(t, dtype=sd.dtype))
    if not np.all(t.data > 0):
        raise ValueError("temperature must be strictly positive")
    t_b = np.broadcast_to(t.data.reshape(-1), (n,)).reshape(n, 1, 1)
    out = m * (sd / t_b + lambda_m) - lambda_m
    out = out[0] if squeeze else out

    def backward(g):
        g3 = g[None] if squeeze else g
        gs = g3 * m / t_b
        gs = gs[0] if squeeze else gs
        gt = None
        if t.requires_grad:
            per_image = -(g3 * m * sd).sum(axis=(1, 2)) / t_b.reshape(n) ** 2
            gt = per_image.reshape(t.shape) if t.size == n else np.asarray(per_image.sum()).reshape(t.shape)
        return gs, gt

    return make_result(out, (s, t), backward)


def attention_weights(s_m: Tensor, m_prime=None, strict: bool = False) -> Tensor:
    """Row softmax of the masked scores.

    An image with no valid key gets uniform weights over all keys (which is
    what the softmax of a constant row gives); ``strict`` raises instead.
    """
    if m_prime is not None:
        valid = np.asarray(m_prime).reshape(-1, np.shape(m_prime)[-1]).sum(axis=-1)
        if np.any(valid == 0):
            if strict:
                raise DegenerateMaskError("no valid key patch; every key overlaps the hole")
            warnings.warn(f"no valid key patch for {int((valid == 0).sum())} image(s); using uniform attention",
                          DegenerateMaskWarning, stacklevel=2)
    return ops.softmax_rows(s_m)


def refine_patches(w: Tensor, v: Tensor) -> Tensor:
    return ops.matmul(w, v)


def roll(p: Tensor, h: int, w: int, s: int) -> Tensor:
    squeeze = p.ndim == 2
    if squeeze:
        p = ops.reshape(p, (1,) + p.shape)
    out = ops.fold_average(p, h, w, s)
    return ops.reshape(out, out.shape[1:]) if squeeze else out


def soft_clamp(t: Tensor, ceiling: float = TEMPERATURE_CEILING) -> Tensor:
    return ops.scale(ops.tanh(ops.scale(t, 1.0 / ceiling)), ceiling)


# ---------------------------------------------------------------------------
# temperature embedding network


class TemperatureEmbedding(Module):
    """Four 3x3 convolutions, parallel global average / max pooling, one FC layer,
    then a positivity-enforcing Softplus head producing one temperature per head."""

    def __init__(self, channels: int, n_heads: int, rng: np.random.Generator, dtype=np.float64,
                 n_convs: int = 4, slope: float = 0.01, softplus_form: str = "printed",
                 floor: float = TEMPERATURE_FLOOR):
        if softplus_form not in ("printed", "conventional"):
            raise ValueError(f"unknown softplus form {softplus_form!r}")
        std = np.sqrt(2.0 / (9 * channels))
        self.conv_w = [param(rng.normal(0.0, std, (3, 3, channels, channels)), dtype) for _ in range(n_convs)]
        self.conv_b = [param(np.zeros(channels), dtype) for _ in range(n_convs)]
        self.fc_w = param(rng.normal(0.0, 0.1 / np.sqrt(2 * channels), (2 * channels, n_heads)), dtype)
        self.fc_b = param(np.zeros(n_heads), dtype)
        self.slope = slope
        self.softplus_form = softplus_form
        if not floor >= 0:
            raise ValueError("temperature floor must be non-negative")
        self.floor = floor

    def logits(self, f_in: Tensor) -> Tensor:
        x = f_in
        for w, b in zip(self.conv_w, self.conv_b):
            x = ops.leaky_relu(ops.add(ops.conv2d(x, w, pad=1), b), self.slope)
        pooled = ops.concat([ops.pool_global(x, "mean"), ops.pool_global(x, "max")], axis=-1)
        return ops.add(ops.matmul(pooled, self.fc_w), self.fc_b)

    def __call__(self, f_in: Tensor) -> Tensor:
        """``N x K`` strictly positive temperatures."""
        z = self.logits(f_in)
        t = ops.softplus_paper(z) if self.softplus_form == "printed" else ops.softplus(z)
        if self.floor:
            t = ops.add(t, self.floor)
        t = soft_clamp(t)
        if not np.all(np.isfinite(t.data)):
            raise ops.NumericError(
                f"non-finite temperature; logits range [{np.nanmin(z.data)}, {np.nanmax(z.data)}]")
        return t


def temperature_embed(f_in: Tensor, params: "MHTMA") -> Tensor:
    return params.temperature(f_in)


# ---------------------------------------------------------------------------
# multi-head module


class MHTMA(Module):
    def __init__(self, channels: int, heads: Sequence[HeadConfig], rng: np.random.Generator,
                 dtype=np.float64, softplus_form: str = "printed", embed_slope: float = 0.01,
                 temperature_floor: float = TEMPERATURE_FLOOR):
        heads = list(heads)
        if sum(hc.c_embed for hc in heads) != channels:
            raise ValueError(f"head embed widths {[hc.c_embed for hc in heads]} must sum to {channels}")
        self.heads = heads
        self.channels = channels
        self.embed = [param(rng.normal(0.0, 1.0 / np.sqrt(channels), (channels, hc.c_embed)), dtype) for hc in heads]
        self.temperature = TemperatureEmbedding(channels, len(heads), rng, dtype, slope=embed_slope,
                                                softplus_form=softplus_form, floor=temperature_floor)

    @classmethod
    def uniform(cls, channels: int, n_heads: int, rng: np.random.Generator, patch_size: int = 3,
                lambda_m: float = 1e4, key_stride: int = 1, **kwargs) -> "MHTMA":
        if channels % n_heads:
            raise ValueError(f"{channels} channels not divisible by {n_heads} heads")
        hc = HeadConfig(patch_size, channels // n_heads, lambda_m, key_stride)
        return cls(channels, [hc] * n_heads, rng, **kwargs)

    @property
    def n_heads(self) -> int:
        return len(self.heads)

    def __call__(self, f_in: Tensor, mask, temperatures=None, return_states: bool = False):
        return mhtma_forward(f_in, mask, self, temperatures, return_states)


def _as_batch_mask(mask, n: int) -> np.ndarray:
    if isinstance(mask, MaskArtifacts):
        mask = mask.mask
    mask = np.asarray(mask)
    if mask.ndim == 2:
        mask = np.broadcast_to(mask, (n,) + mask.shape)
    if mask.shape[0] != n:
        raise ValueError(f"mask batch {mask.shape[0]} does not match feature batch {n}")
    return mask


def _temperatures(f_in: Tensor, params: MHTMA, temperatures) -> Tensor:
    n = f_in.shape[0]
    if temperatures is None:
        return temperature_embed(f_in, params)
    t = temperatures if isinstance(temperatures, Tensor) else Tensor(np.asarray(temperatures, dtype=f_in.dtype))
    if t.ndim <= 1:
        t_arr = np.broadcast_to(t.data.reshape(-1), (params.n_heads,))
        if t.requires_grad:
            raise ValueError("differentiable temperatures must be given as an N x K tensor")
        t = Tensor(np.broadcast_to(t_arr, (n, params.n_heads)).copy())
    if t.shape != (n, params.n_heads):
        raise ValueError(f"temperatures must be {n}x{params.n_heads}, got {t.shape}")
    return t


def mhtma_forward(f_in: Tensor, mask, params: MHTMA, temperatures=None, return_states: bool = False):
    """Refined ``N x H x W x C`` cube; with ``return_states`` also per-head intermediates.

    ``mask`` is the hole mask at any integer multiple of the feature
    resolution (``N x H0 x W0`` or a single ``H0 x W0``). ``temperatures``
    defaults to the output of the embedding network.
    """
    f_in = as_tensor(f_in)
    n, h, w, c = f_in.shape
    if c != params.channels:
        raise ops.ShapeError(f"expected {params.channels} channels, got {c}")
    mask = _as_batch_mask(mask, n)
    t_all = _temperatures(f_in, params, temperatures)

    refined, states = [], []
    for i, hc in enumerate(params.heads):
        art = MaskArtifacts.build(mask, h, w, hc.patch_size, hc.key_stride)
        f_e = embed_channels(f_in, params.embed[i])
        patches = unroll(f_e, hc)
        s = attention_scores(patches)
        t_i = ops.reshape(ops.slice_last(t_all, i, i + 1), (n,))
        s_m = mask_scores(s, art.m_prime, t_i, hc.lambda_m)
        wts = attention_weights(s_m, art.m_prime)
        p = refine_patches(wts, patches.v)
        refined.append(roll(p, h, w, hc.patch_size))
        states.append(AttentionState(scores=s, masked=s_m, weights=wts, patches=p))
    out = refined[0] if len(refined) == 1 else ops.concat(refined, axis=-1)
    if return_states:
        return out, states, t_all
    return out


# ---------------------------------------------------------------------------
# loop reference


def attention_loop_reference(f_in, mask, params: MHTMA, temperatures=None) -> np.ndarray:
    """Same result as :func:`mhtma_forward`, one query at a time in plain numpy."""
    f = np.asarray(f_in.data if isinstance(f_in, Tensor) else f_in)
    n, h, w, c = f.shape
    mask = _as_batch_mask(mask, n)
    with no_grad():
        t_all = _temperatures(Tensor(f), params, temperatures).data
    out = np.zeros((n, h, w, c), dtype=f.dtype)
    for b in range(n):
        col = 0
        for i, hc in enumerate(params.heads):
            s, stride, pad, ce = hc.patch_size, hc.key_stride, hc.pad, hc.c_embed
            low = MaskArtifacts.build(mask[b], h, w, s, stride).low[0]
            emb = params.embed[i].data
            fe = np.empty((h, w, ce), dtype=f.dtype)
            for y in range(h):
                for x in range(w):
                    fe[y, x] = f[b, y, x] @ emb
            keys, valid = [], []
            for ky in range(0, h - s + 1, stride):
                for kx in range(0, w - s + 1, stride):
                    keys.append(fe[ky:ky + s, kx:kx + s].reshape(-1))
                    valid.append(low[ky:ky + s, kx:kx + s].sum() == 0)
            keys = np.array(keys)
            valid = np.array(valid)
            norms = np.sqrt((keys * keys).sum(axis=1))
            keys_n = keys / np.where(norms > 0, norms, 1.0)[:, None]
            t = t_all[b, i]
            fe_pad = np.pad(fe, ((pad, pad), (pad, pad), (0, 0)))
            acc = np.zeros_like(fe_pad)
            cnt = np.zeros(fe_pad.shape[:2])
            for y in range(h):
                for x in range(w):
                    q = fe_pad[y:y + s, x:x + s].reshape(-1)
                    qn = np.sqrt(q @ q)
                    q = q / qn if qn > 0 else q
                    score = np.where(valid, (keys_n @ q) / t, -hc.lambda_m)
                    e = np.exp(score - score.max())
                    wts = e / e.sum()
                    acc[y:y + s, x:x + s] += (wts @ keys).reshape(s, s, ce)
                    cnt[y:y + s, x:x + s] += 1
            out[b, :, :, col:col + ce] = acc[pad:pad + h, pad:pad + w] / cnt[pad:pad + h, pad:pad + w, None]
            col += ce
    return out


# ---------------------------------------------------------------------------
# contextual attention baseline


def contextual_attention_forward(f_in: Tensor, mask, temperature: float = 0.1, patch_size: int = 3,
                                 key_stride: int = 1) -> Tensor:
    """Convolution-based attention with a fixed temperature, one image at a time.

    Keys are normalised, queries are not; the softmax output is multiplied by
    the key-validity vector, so an image with no valid key yields zeros.
    Reconstruction is a transposed convolution averaged by patch overlap.
    """
    f_in = as_tensor(f_in)
    n, h, w, c = f_in.shape
    mask = _as_batch_mask(mask, n)
    s, pad = patch_size, (patch_size - 1) // 2
    inv_count = Tensor(np.broadcast_to(1.0 / ops.overlap_count(h, w, s, f_in.dtype), (1, h, w, c)).copy())
    outputs = []
    for b in range(n):
        x = _select(f_in, b)
        m_prime = MaskArtifacts.build(mask[b], h, w, s, key_stride).m_prime[0].astype(f_in.dtype)
        raw = ops.extract_patches(x, s, stride=key_stride, pad=0)  # 1 x N_k x s*s*C
        n_k = raw.shape[1]
        raw2 = ops.reshape(raw, (n_k, s * s * c))
        normed = ops.l2_normalize_rows(raw2)
        kernel = ops.transpose(ops.reshape(normed, (n_k, s, s, c)), (1, 2, 3, 0))  # HWIO
        scores = ops.conv2d(x, kernel, pad=pad)  # 1 x H x W x N_k
        masked = ops.mul(scores, Tensor(m_prime))
        wts = ops.mul(ops.softmax_rows(ops.scale(masked, 1.0 / temperature)), Tensor(m_prime))
        values = ops.transpose(ops.reshape(raw2, (n_k, s, s, c)), (1, 2, 3, 0))  # HWOI
        rec = ops.conv_transpose2d(wts, values, pad=pad)
        outputs.append(ops.mul(rec, inv_count))
    return outputs[0] if n == 1 else ops.concat(outputs, axis=0)


def _select(x: Tensor, b: int) -> Tensor:
    n = x.shape[0]
    if n == 1:
        return x
    data = x.data[b:b + 1]

    def backward(g):
        full = np.zeros_like(x.data)
        full[b:b + 1] = g
        return (full,)

    return make_result(data, (x,), backward)
