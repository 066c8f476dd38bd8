"""MAE, PSNR and SSIM on images with values in ``[0, 1]``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class MetricReport:
    mae: float
    psnr: float
    ssim: float


def _pair(a, b, mask=None):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if mask is None:
        return a, b
    sel = np.asarray(mask) > 0
    if a.ndim == 3:
        sel = np.broadcast_to(sel[..., None], a.shape)
    return a[sel], b[sel]


def mae(a, b, mask=None) -> float:
    """Mean absolute difference, optionally over hole pixels only."""
    a, b = _pair(a, b, mask)
    return float(np.abs(a - b).mean())


def psnr(a, b, mask=None) -> float:
    """``10 log10(1 / MSE)``; identical inputs give ``inf``."""
    a, b = _pair(a, b, mask)
    mse = float(((a - b) ** 2).mean())
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _ssim_plane(a: np.ndarray, b: np.ndarray, window: np.ndarray, data_range: float) -> np.ndarray:
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def filt(x):
        return np.einsum("ijkl,kl->ij", sliding_window_view(x, window.shape), window)

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))


def ssim_map(a, b, data_range: float = 1.0) -> np.ndarray:
    a, b = _pair(a, b)
    window = gaussian_window()
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"image {a.shape[:2]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    if a.ndim == 2:
        return _ssim_plane(a, b, window, data_range)
    return np.mean([_ssim_plane(a[..., c], b[..., c], window, data_range) for c in range(a.shape[-1])], axis=0)


def ssim(a, b, data_range: float = 1.0, mask=None) -> float:
    """Mean local SSIM over valid 11x11 Gaussian windows; colour channels are averaged.

    With ``mask`` only windows whose centre lies in the hole are averaged.
    """
    smap = ssim_map(a, b, data_range)
    if mask is None:
        return float(smap.mean())
    off = SSIM_WINDOW // 2
    sel = np.asarray(mask)[off:off + smap.shape[0], off:off + smap.shape[1]] > 0
    return float(smap[sel].mean()) if sel.any() else float("nan")


def report(a, b, mask=None) -> MetricReport:
    return MetricReport(mae(a, b, mask), psnr(a, b, mask), ssim(a, b, mask=mask))
