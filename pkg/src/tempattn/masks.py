"""Free-form hole masks and their reduction to key-validity vectors.

Mask convention throughout: 1 marks a missing pixel, 0 a known one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BrushConfig:
    """Brush-stroke distribution, in pixels at a 256-pixel reference side."""

    min_strokes: int = 1
    max_strokes: int = 4
    min_vertices: int = 4
    max_vertices: int = 12
    min_width: float = 5.0
    max_width: float = 24.0
    min_length: float = 10.0
    max_length: float = 40.0
    square_fraction: float = 96.0 / 256.0


def _paint_segment(canvas: np.ndarray, p: tuple[float, float], q: tuple[float, float], radius: float) -> None:
    """Set every pixel within ``radius`` of segment ``pq`` (round caps included)."""
    h, w = canvas.shape
    (py, px), (qy, qx) = p, q
    y0 = max(int(np.floor(min(py, qy) - radius)), 0)
    y1 = min(int(np.ceil(max(py, qy) + radius)) + 1, h)
    x0 = max(int(np.floor(min(px, qx) - radius)), 0)
    x1 = min(int(np.ceil(max(px, qx) + radius)) + 1, w)
    if y0 >= y1 or x0 >= x1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    dy, dx = qy - py, qx - px
    seg2 = dy * dy + dx * dx
    if seg2 == 0:
        u = np.zeros_like(yy)
    else:
        u = np.clip(((yy - py) * dy + (xx - px) * dx) / seg2, 0.0, 1.0)
    ey = yy - (py + u * dy)
    ex = xx - (px + u * dx)
    canvas[y0:y1, x0:x1] |= ey * ey + ex * ex <= radius * radius


def brush_strokes(h: int, w: int, rng: np.random.Generator, cfg: BrushConfig = BrushConfig()) -> np.ndarray:
    canvas = np.zeros((h, w), dtype=bool)
    unit = min(h, w) / 256.0
    for _ in range(rng.integers(cfg.min_strokes, cfg.max_strokes + 1)):
        n_vertices = int(rng.integers(cfg.min_vertices, cfg.max_vertices + 1))
        width = rng.uniform(cfg.min_width, cfg.max_width) * unit
        radius = width / 2.0
        y, x = rng.uniform(0, h), rng.uniform(0, w)
        for _ in range(n_vertices - 1):
            angle = rng.uniform(0.0, 2.0 * np.pi)
            length = rng.uniform(cfg.min_length, cfg.max_length) * unit
            ny = float(np.clip(y + length * np.sin(angle), 0, h - 1))
            nx = float(np.clip(x + length * np.cos(angle), 0, w - 1))
            _paint_segment(canvas, (y, x), (ny, nx), radius)
            y, x = ny, nx
    return canvas


def square_side(h: int, w: int, cfg: BrushConfig = BrushConfig()) -> int:
    return max(1, int(round(cfg.square_fraction * min(h, w))))


def generate_freeform_mask(h: int, w: int, seed, cfg: BrushConfig = BrushConfig()) -> np.ndarray:
    """Union of random brush strokes and one axis-aligned square; uint8 ``h x w``."""
    if h < 16 or w < 16:
        raise ValueError(f"mask must be at least 16x16, got {h}x{w}")
    rng = np.random.default_rng(seed)
    mask = brush_strokes(h, w, rng, cfg)
    side = square_side(h, w, cfg)
    top = int(rng.integers(0, h - side + 1))
    left = int(rng.integers(0, w - side + 1))
    mask[top:top + side, left:left + side] = True
    return mask.astype(np.uint8)


def mask_ratio(mask: np.ndarray) -> float:
    return float(np.asarray(mask, dtype=np.float64).mean())


def downsample_mask(mask: np.ndarray, h: int, w: int) -> np.ndarray:
    """Block-max reduction to ``h x w``: a cell is missing if any covered pixel is.

    Accepts a single ``H0 x W0`` mask or a batch ``N x H0 x W0``.
    """
    mask = np.asarray(mask)
    h0, w0 = mask.shape[-2:]
    if h > h0 or w > w0 or h0 % h or w0 % w:
        raise ValueError(f"cannot reduce {h0}x{w0} mask to {h}x{w} by an integer factor")
    fy, fx = h0 // h, w0 // w
    blocks = mask.reshape(*mask.shape[:-2], h, fy, w, fx)
    return blocks.max(axis=(-3, -1)).astype(np.uint8)


def binarize_patch_mask(mask_low: np.ndarray, size: int, key_stride: int = 1) -> np.ndarray:
    """Key-validity vector: 1 where the ``size``x``size`` key patch has no missing cell.

    Key positions follow the unpadded, strided extraction used for keys, in
    row-major order. Works on ``H x W`` or ``N x H x W`` input.
    """
    m = np.asarray(mask_low, dtype=np.int64)
    h, w = m.shape[-2:]
    if h < size or w < size:
        raise ValueError(f"mask {h}x{w} smaller than patch size {size}")
    # summed-area table keeps this O(HW) for any patch size
    sat = np.zeros(m.shape[:-2] + (h + 1, w + 1), dtype=np.int64)
    sat[..., 1:, 1:] = m.cumsum(axis=-2).cumsum(axis=-1)
    ys = np.arange(0, h - size + 1, key_stride)
    xs = np.arange(0, w - size + 1, key_stride)
    y0, x0 = np.meshgrid(ys, xs, indexing="ij")
    y1, x1 = y0 + size, x0 + size
    sums = sat[..., y1, x1] - sat[..., y0, x1] - sat[..., y1, x0] + sat[..., y0, x0]
    return (sums == 0).astype(np.uint8).reshape(*m.shape[:-2], -1)


@dataclass
class MaskArtifacts:
    """A hole mask together with its attention-resolution reductions."""

    mask: np.ndarray  # N x H0 x W0 original
    low: np.ndarray  # N x H x W block-max reduction
    m_prime: np.ndarray  # N x N_k key validity

    @classmethod
    def build(cls, mask: np.ndarray, h: int, w: int, size: int, key_stride: int = 1) -> "MaskArtifacts":
        mask = np.asarray(mask)
        if mask.ndim == 2:
            mask = mask[None]
        low = downsample_mask(mask, h, w)
        return cls(mask=mask, low=low, m_prime=binarize_patch_mask(low, size, key_stride))

    def broadcast(self, n_queries: int) -> np.ndarray:
        """The ``N x N_q x N_k`` matrix with every row equal to the validity vector."""
        return np.broadcast_to(self.m_prime[:, None, :], (self.m_prime.shape[0], n_queries, self.m_prime.shape[1]))
