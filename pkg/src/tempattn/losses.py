"""Reconstruction, perceptual, hinge adversarial and full generator objectives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import Tensor, as_tensor


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.2
    lambda2: float = 1.0
    lambda_p: float = 0.004
    lambda_adv: float = 0.01

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda_p, self.lambda_adv) < 0:
            raise ValueError("loss weights must be non-negative")


def l1(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ops.ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return ops.mean(ops.abs(ops.sub(a, b)))


def recon_loss(i_c: Tensor, i_out: Tensor, i_gt: Tensor, w: LossWeights = LossWeights()) -> Tensor:
    return ops.add(ops.scale(l1(i_c, i_gt), w.lambda1), ops.scale(l1(i_out, i_gt), w.lambda2))


class PerceptualProxy:
    """Frozen two-layer random convolutional feature extractor (3 -> 16 -> 32 channels)."""

    def __init__(self, seed: int = 1234, dtype=np.float32, widths=(16, 32), slope: float = 0.2):
        rng = np.random.default_rng(seed)
        cins = (3,) + tuple(widths[:-1])
        self.kernels = [Tensor(rng.normal(0.0, np.sqrt(2.0 / (9 * ci)), (3, 3, ci, co)).astype(dtype))
                        for ci, co in zip(cins, widths)]
        self.slope = slope

    def __call__(self, x: Tensor) -> Tensor:
        for k in self.kernels:
            x = ops.leaky_relu(ops.conv2d(x, k, pad=1), self.slope)
        return x


def perceptual_loss(i_c: Tensor, i_gt: Tensor, proxy: PerceptualProxy) -> Tensor:
    return l1(proxy(as_tensor(i_c)), proxy(as_tensor(i_gt)))


def adv_d_loss(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """Hinge loss ``E[1 - D(real)]_+ + E[1 + D(fake)]_+``."""
    d_real, d_fake = as_tensor(d_real), as_tensor(d_fake)
    real = ops.mean(ops.relu(ops.sub(1.0, d_real)))
    fake = ops.mean(ops.relu(ops.add(d_fake, 1.0)))
    return ops.add(real, fake)


def adv_g_loss(d_fake: Tensor) -> Tensor:
    return ops.scale(ops.mean(as_tensor(d_fake)), -1.0)


def total_g_loss(recon: Tensor, perceptual: Tensor, adversarial: Tensor, w: LossWeights = LossWeights()) -> Tensor:
    total = ops.add(as_tensor(recon), ops.scale(as_tensor(perceptual), w.lambda_p))
    return ops.add(total, ops.scale(as_tensor(adversarial), w.lambda_adv))
