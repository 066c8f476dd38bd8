"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def numerical_grad(
    fn: Callable[[], Tensor],
    wrt: Tensor,
    h: float = 1e-5,
    indices: Sequence[tuple[int, ...]] | None = None,
) -> np.ndarray:
    """d(sum fn())/d(wrt) by central differences, optionally at selected entries only.

    Entries not in ``indices`` are left as NaN.
    """
    grad = np.full(wrt.shape, np.nan) if indices is not None else np.zeros(wrt.shape)
    if indices is None:
        indices = list(np.ndindex(*wrt.shape))
    with no_grad():
        for idx in indices:
            orig = wrt.data[idx]
            wrt.data[idx] = orig + h
            plus = float(fn().data.sum())
            wrt.data[idx] = orig - h
            minus = float(fn().data.sum())
            wrt.data[idx] = orig
            grad[idx] = (plus - minus) / (2 * h)
    return grad


def analytic_grad(fn: Callable[[], Tensor], wrt: Sequence[Tensor]) -> list[np.ndarray]:
    for t in wrt:
        t.requires_grad = True
        t.grad = None
    out = fn()
    out.backward(np.ones_like(out.data))
    return [np.zeros(t.shape) if t.grad is None else t.grad.copy() for t in wrt]


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """max |a-b| / max(|a|, |b|, floor), evaluated over the finite entries of ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    keep = np.isfinite(b)
    a, b = a[keep], b[keep]
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)).max(), floor)
    return float(np.abs(a - b).max() / denom)


def check_gradients(
    fn: Callable[[], Tensor],
    wrt: Sequence[Tensor],
    h: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative error between analytic and numerical gradients over ``wrt``.

    With ``max_entries`` only a random subset of coordinates of each tensor is
    probed numerically.
    """
    analytic = analytic_grad(fn, wrt)
    worst = 0.0
    rng = rng if rng is not None else np.random.default_rng(0)
    for tensor, ga in zip(wrt, analytic):
        indices = None
        if max_entries is not None and tensor.size > max_entries:
            flat = rng.choice(tensor.size, size=max_entries, replace=False)
            indices = [np.unravel_index(i, tensor.shape) for i in flat]
        gn = numerical_grad(fn, tensor, h=h, indices=indices)
        worst = max(worst, relative_error(ga, gn))
    return worst
