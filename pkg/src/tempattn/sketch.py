"""Sketch extraction: gradient edges, thresholding, area opening, thinning."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

LUMA = (0.299, 0.587, 0.114)
EIGHT = np.ones((3, 3), dtype=bool)

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


def to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return img[..., :3] @ np.asarray(LUMA)


def edge_map(img: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude scaled to ``[0, 1]`` (edge-replicated borders)."""
    gray = to_gray(img)
    h, w = gray.shape
    padded = np.pad(gray, 1, mode="edge")
    gx = np.zeros_like(gray)
    gy = np.zeros_like(gray)
    for i in range(3):
        for j in range(3):
            window = padded[i:i + h, j:j + w]
            gx += SOBEL_X[i, j] * window
            gy += SOBEL_Y[i, j] * window
    mag = np.hypot(gx, gy)
    mag[mag < 1e-12] = 0.0  # roundoff on flat regions
    peak = mag.max()
    return mag / peak if peak > 0 else np.zeros_like(mag)


def binarize_edges(e: np.ndarray, threshold: float = 0.65) -> np.ndarray:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return (np.asarray(e) > threshold).astype(np.uint8)


def area_open(m: np.ndarray, min_px: int = 100) -> np.ndarray:
    """Drop 8-connected foreground components smaller than ``min_px``."""
    if min_px < 1:
        raise ValueError("min_px must be at least 1")
    labels, count = ndimage.label(np.asarray(m) > 0, structure=EIGHT)
    if count == 0:
        return np.zeros(np.shape(m), dtype=np.uint8)
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_px
    keep[0] = False
    return keep[labels].astype(np.uint8)


def _simple_point_table() -> np.ndarray:
    """For each 8-neighbourhood code, whether deleting the centre preserves topology.

    Neighbour bit order is clockwise from north: N, NE, E, SE, S, SW, W, NW.
    A point is simple when its foreground neighbours form exactly one
    8-component and the background neighbours 4-adjacent to it form exactly
    one 4-component (both taken inside the 3x3 window).
    """
    offsets = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]
    table = np.zeros(256, dtype=bool)
    for code in range(256):
        fg = {offsets[k] for k in range(8) if code >> k & 1}
        bg = {offsets[k] for k in range(8) if not code >> k & 1}

        def components(cells, adjacent):
            seen, comps = set(), []
            for start in cells:
                if start in seen:
                    continue
                group, todo = set(), [start]
                while todo:
                    c = todo.pop()
                    if c in seen:
                        continue
                    seen.add(c)
                    group.add(c)
                    todo.extend(o for o in cells if o not in seen and adjacent(c, o))
                comps.append(group)
            return comps

        def adj8(a, b):
            return max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1

        def adj4(a, b):
            return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1

        n_fg = len(components(fg, adj8))
        four = {(-1, 0), (0, 1), (1, 0), (0, -1)}
        n_bg = sum(1 for comp in components(bg, adj4) if comp & four)
        table[code] = n_fg == 1 and n_bg == 1
    return table


SIMPLE = _simple_point_table()
_WEIGHTS = np.array([[128, 1, 2], [64, 0, 4], [32, 16, 8]], dtype=np.int64)


def _neighbour_code(img: np.ndarray, y: int, x: int) -> int:
    window = img[y - 1:y + 2, x - 1:x + 2]
    return int((window * _WEIGHTS).sum())


def skeletonize(m: np.ndarray) -> np.ndarray:
    """Homotopic thinning to one-pixel-wide curves.

    Each pass peels the north, south, east and west borders in turn.
    Candidates of a sub-pass are the border pixels at its start; they are
    removed one at a time, in raster order, if still simple and not an end
    point, so 8-connected component counts never change. The loop ends after
    a full pass without deletions, which also makes the operation idempotent.
    """
    img = np.pad((np.asarray(m) > 0).astype(np.int64), 1)
    directions = [(-1, 0), (1, 0), (0, 1), (0, -1)]
    changed = True
    while changed:
        changed = False
        for dy, dx in directions:
            core = img[1:-1, 1:-1]
            neighbour = img[1 + dy:img.shape[0] - 1 + dy, 1 + dx:img.shape[1] - 1 + dx]
            ys, xs = np.nonzero((core == 1) & (neighbour == 0))
            for y, x in zip(ys + 1, xs + 1):
                code = _neighbour_code(img, y, x)
                if bin(code).count("1") >= 2 and SIMPLE[code]:
                    img[y, x] = 0
                    changed = True
    return img[1:-1, 1:-1].astype(np.uint8)


def sketch_channel(sk: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Keep sketch strokes only inside the hole."""
    sk, m = np.asarray(sk), np.asarray(m)
    if sk.shape != m.shape:
        raise ValueError(f"sketch {sk.shape} and mask {m.shape} differ in size")
    return (sk * m).astype(np.uint8)


def extract_sketch(img: np.ndarray, threshold: float = 0.65, min_area: int = 100) -> np.ndarray:
    return skeletonize(area_open(binarize_edges(edge_map(img), threshold), min_area))
