"""Procedural texture dataset and seeded batch assembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .masks import generate_freeform_mask
from .sketch import extract_sketch, sketch_channel

KINDS = ("stripes", "checker", "gradient", "blobs")


def _palette(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    a = rng.uniform(0.0, 1.0, 3)
    b = rng.uniform(0.0, 1.0, 3)
    return a, b


def synthetic_texture(kind: str, size: int, rng: np.random.Generator) -> np.ndarray:
    """One ``size x size x 3`` texture in ``[0, 1]``."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    a, b = _palette(rng)
    if kind == "stripes":
        angle = rng.uniform(0, np.pi)
        period = rng.uniform(4, 12)
        phase = (np.cos(angle) * xx + np.sin(angle) * yy) * 2 * np.pi / period
        t = 0.5 + 0.5 * np.sin(phase + rng.uniform(0, 2 * np.pi))
    elif kind == "checker":
        cell = int(rng.integers(3, 9))
        oy, ox = rng.integers(0, cell, 2)
        t = (((yy + oy) // cell + (xx + ox) // cell) % 2).astype(np.float64)
    elif kind == "gradient":
        angle = rng.uniform(0, 2 * np.pi)
        proj = np.cos(angle) * (xx - size / 2) + np.sin(angle) * (yy - size / 2)
        t = (proj - proj.min()) / max(np.ptp(proj), 1e-9)
    elif kind == "blobs":
        t = np.zeros((size, size))
        for _ in range(int(rng.integers(3, 7))):
            cy, cx = rng.uniform(0, size, 2)
            r = rng.uniform(size / 10, size / 4)
            t += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
        t = np.clip(t, 0.0, 1.0)
    else:
        raise ValueError(f"unknown texture kind {kind!r}")
    img = a[None, None, :] * (1 - t[..., None]) + b[None, None, :] * t[..., None]
    return np.clip(img, 0.0, 1.0)


def make_dataset(n: int, size: int, seed) -> np.ndarray:
    """``n`` textures cycling through every kind; ``n x size x size x 3``."""
    rng = np.random.default_rng(seed)
    return np.stack([synthetic_texture(KINDS[i % len(KINDS)], size, rng) for i in range(n)])


@dataclass
class Batch:
    gt: np.ndarray  # N x H x W x 3 in [-1, 1]
    image_in: np.ndarray  # holes filled with the mean colour
    mask: np.ndarray  # N x H x W, 1 = missing
    sketch: np.ndarray | None = None  # N x H x W sketch channel


def to_signed(img: np.ndarray) -> np.ndarray:
    return img * 2.0 - 1.0


def to_unit(img: np.ndarray) -> np.ndarray:
    return np.clip((img + 1.0) / 2.0, 0.0, 1.0)


def fill_holes(gt_signed: np.ndarray, mask: np.ndarray, fill) -> np.ndarray:
    fill = to_signed(np.asarray(fill, dtype=np.float64))
    m = mask[..., None].astype(np.float64)
    return gt_signed * (1.0 - m) + fill[None, None, None, :] * m


def assemble(images: np.ndarray, masks: np.ndarray, cfg: TrainConfig, flips=None, dtype=np.float32) -> Batch:
    imgs = np.array(images, dtype=np.float64)
    if flips is not None:
        imgs = np.stack([im[:, ::-1] if f else im for im, f in zip(imgs, flips)])
    masks = np.asarray(masks, dtype=np.uint8)
    sketch = None
    if cfg.sketch_guided:
        sketch = np.stack([sketch_channel(extract_sketch(im, cfg.sketch_threshold, cfg.sketch_min_area), m)
                           for im, m in zip(imgs, masks)]).astype(dtype)
    gt = to_signed(imgs)
    return Batch(gt=gt.astype(dtype), image_in=fill_holes(gt, masks, cfg.hole_fill).astype(dtype),
                 mask=masks, sketch=sketch)


def training_batch(dataset: np.ndarray, cfg: TrainConfig, step: int, dtype=np.float32) -> Batch:
    """Batch for a given optimisation step, a pure function of ``(seed, step)``.

    An epoch is one pass over a per-epoch permutation of the training set.
    """
    n = len(dataset)
    per_epoch = steps_per_epoch(n, cfg.batch_size)
    epoch, pos = divmod(step, per_epoch)
    order = np.random.default_rng([cfg.seed, 1, epoch]).permutation(n)
    idx = [order[(pos * cfg.batch_size + j) % n] for j in range(cfg.batch_size)]
    rng = np.random.default_rng([cfg.seed, 2, step])
    flips = rng.random(cfg.batch_size) < cfg.flip_prob
    masks = np.stack([generate_freeform_mask(cfg.image_size, cfg.image_size, [cfg.seed, 3, step, j])
                      for j in range(cfg.batch_size)])
    return assemble(dataset[idx], masks, cfg, flips, dtype)


def validation_batches(dataset: np.ndarray, cfg: TrainConfig, dtype=np.float32):
    """Fixed masks, no flips; yields batches covering the whole validation set."""
    masks = np.stack([generate_freeform_mask(cfg.image_size, cfg.image_size, [cfg.seed, 4, i])
                      for i in range(len(dataset))])
    for lo in range(0, len(dataset), cfg.batch_size):
        yield assemble(dataset[lo:lo + cfg.batch_size], masks[lo:lo + cfg.batch_size], cfg, None, dtype)


def steps_per_epoch(n: int, batch_size: int) -> int:
    return max(1, -(-n // batch_size))
