"""Differentiable operations over :class:`~tempattn.tensor.Tensor`.

Image tensors are NHWC; convolution kernels are HWIO. Broadcasting is limited
to tensor-with-scalar and tensor-with-per-channel-vector (last axis).
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, make_result


class ShapeError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


# ---------------------------------------------------------------------------
# broadcasting helpers


def _operand(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _check_broadcast(a: Tensor, b: Tensor) -> str:
    if a.shape == b.shape:
        return "same"
    if b.size == 1 and b.ndim <= 1:
        return "b_scalar"
    if a.size == 1 and a.ndim <= 1:
        return "a_scalar"
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return "b_channel"
    if a.ndim == 1 and b.ndim >= 1 and b.shape[-1] == a.shape[0]:
        return "a_channel"
    raise ShapeError(f"cannot broadcast shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    if len(shape) <= 1 and int(np.prod(shape)) == 1:
        return np.asarray(g.sum()).reshape(shape)
    # per-channel vector
    return g.reshape(-1, shape[0]).sum(axis=0)


def _binary_inputs(a, b) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise TypeError("at least one operand must be a Tensor")
    if isinstance(a, Tensor):
        return a, _operand(b, a)
    b = as_tensor(b)
    return _operand(a, b), b


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _binary_inputs(a, b)
    _check_broadcast(a, b)
    out = a.data + b.data

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return make_result(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _binary_inputs(a, b)
    _check_broadcast(a, b)
    out = a.data - b.data

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return make_result(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _binary_inputs(a, b)
    _check_broadcast(a, b)
    ad, bd = a.data, b.data
    out = ad * bd

    def backward(g):
        ga = _reduce_to(g * bd, a.shape) if a.requires_grad else None
        gb = _reduce_to(g * ad, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _binary_inputs(a, b)
    _check_broadcast(a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        ga = _reduce_to(g / bd, a.shape) if a.requires_grad else None
        gb = _reduce_to(-g * ad / (bd * bd), b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), backward)


def scale(x: Tensor, c: float) -> Tensor:
    return make_result(x.data * c, (x,), lambda g: (g * c,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return make_result(out, (x,), lambda g: (g * out,))


def abs(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    sign = np.sign(x.data)
    return make_result(np.abs(x.data), (x,), lambda g: (g * sign,))


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = _stable_sigmoid(x.data)
    return make_result(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return make_result(out, (x,), lambda g: (g * (1.0 - out * out),))


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    slope = np.where(x.data > 0, 1.0, alpha).astype(x.dtype)
    return make_result(x.data * slope, (x,), lambda g: (g * slope,))


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


def softplus_paper(x: Tensor) -> Tensor:
    """``ln(1 + exp(-x))``: strictly positive and decreasing in ``x``.

    Outputs are floored at the smallest normal float so that a large positive
    input cannot underflow to a zero temperature.
    """
    tiny = np.finfo(x.dtype).tiny
    out = np.maximum(np.logaddexp(0.0, -x.data), tiny).astype(x.dtype)
    dsig = -_stable_sigmoid(-x.data)
    return make_result(out, (x,), lambda g: (g * dsig,))


def softplus(x: Tensor) -> Tensor:
    """Conventional ``ln(1 + exp(x))``."""
    tiny = np.finfo(x.dtype).tiny
    out = np.maximum(np.logaddexp(0.0, x.data), tiny).astype(x.dtype)
    dsig = _stable_sigmoid(x.data)
    return make_result(out, (x,), lambda g: (g * dsig,))


# ---------------------------------------------------------------------------
# shape manipulation and reductions


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    out = x.data.reshape(shape)
    return make_result(out, (x,), lambda g: (g.reshape(src),))


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = np.argsort(axes)
    return make_result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, tuple(axes))


def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001
    out = x.data.sum(axis=axis)
    src = x.shape

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, src).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), src).copy(),)

    return make_result(np.asarray(out), (x,), backward)


def mean(x: Tensor) -> Tensor:
    n = x.size
    src = x.shape
    out = np.asarray(x.data.mean())
    return make_result(out, (x,), lambda g: (np.full(src, g / n, dtype=x.dtype),))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        grads = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            grads.append(g[tuple(idx)])
        return grads

    return make_result(out, tensors, backward)


def slice_last(x: Tensor, start: int, stop: int) -> Tensor:
    out = x.data[..., start:stop]

    def backward(g):
        full = np.zeros_like(x.data)
        full[..., start:stop] = g
        return (full,)

    return make_result(out, (x,), backward)


def crop(x: Tensor, tops, lefts, size: int) -> Tensor:
    """Per-image square crops from an NHWC batch."""
    n, h, w, _ = x.shape
    if size > h or size > w:
        raise ShapeError(f"crop size {size} exceeds image {h}x{w}")
    tops = [int(t) for t in tops]
    lefts = [int(v) for v in lefts]
    out = np.stack([x.data[i, t:t + size, l:l + size] for i, (t, l) in enumerate(zip(tops, lefts))])

    def backward(g):
        full = np.zeros_like(x.data)
        for i, (t, l) in enumerate(zip(tops, lefts)):
            full[i, t:t + size, l:l + size] += g[i]
        return (full,)

    return make_result(out, (x,), backward)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; 3-D operands must share the leading batch size."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    out = ad @ bd

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(ad, -1, -2) @ g if b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax along the last axis with max subtraction."""
    if np.isnan(x.data).any():
        raise NumericError("softmax_rows received NaN input")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return make_result(out, (x,), backward)


def l2_normalize_rows(x: Tensor) -> Tensor:
    """Scale each last-axis row to unit L2 norm; all-zero rows stay zero."""
    norm = np.sqrt((x.data * x.data).sum(axis=-1, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)
    out = np.where(norm > 0, x.data / safe, 0.0)

    def backward(g):
        proj = (g * out).sum(axis=-1, keepdims=True)
        return (np.where(norm > 0, (g - out * proj) / safe, 0.0),)

    return make_result(out, (x,), backward)


# ---------------------------------------------------------------------------
# patches and convolution (NHWC / HWIO)


def _out_size(n: int, k: int, stride: int, dilation: int, pad: int) -> int:
    return (n + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int = 1, dilation: int = 1, pad: int = 0) -> np.ndarray:
    """``(N, H, W, C)`` -> ``(N, Ho, Wo, kh, kw, C)`` patch stack."""
    n, h, w, c = x.shape
    ho = _out_size(h, kh, stride, dilation, pad)
    wo = _out_size(w, kw, stride, dilation, pad)
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"non-positive output size for input {h}x{w}, kernel {kh}x{kw}")
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    cols = np.empty((n, ho, wo, kh, kw, c), dtype=x.dtype)
    hs = stride * (ho - 1) + 1
    ws = stride * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            y0, x0 = i * dilation, j * dilation
            cols[:, :, :, i, j, :] = xp[:, y0:y0 + hs:stride, x0:x0 + ws:stride, :]
    return cols


def col2im(cols: np.ndarray, h: int, w: int, stride: int = 1, dilation: int = 1, pad: int = 0) -> np.ndarray:
    """Adjoint of :func:`im2col` (overlap-add)."""
    n, ho, wo, kh, kw, c = cols.shape
    xp = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=cols.dtype)
    hs = stride * (ho - 1) + 1
    ws = stride * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            y0, x0 = i * dilation, j * dilation
            xp[:, y0:y0 + hs:stride, x0:x0 + ws:stride, :] += cols[:, :, :, i, j, :]
    if pad:
        xp = xp[:, pad:pad + h, pad:pad + w, :]
    return xp


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, dilation: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of NHWC ``x`` with an HWIO ``kernel``."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    kh, kw, cin, cout = kernel.shape
    n, h, w, c = x.shape
    if c != cin:
        raise ShapeError(f"kernel expects {cin} input channels, got {c}")
    cols = im2col(x.data, kh, kw, stride, dilation, pad)
    _, ho, wo = cols.shape[:3]
    cols2 = cols.reshape(n * ho * wo, kh * kw * cin)
    wmat = kernel.data.reshape(kh * kw * cin, cout)
    out = (cols2 @ wmat).reshape(n, ho, wo, cout)

    def backward(g):
        g2 = g.reshape(n * ho * wo, cout)
        gk = (cols2.T @ g2).reshape(kernel.shape) if kernel.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g2 @ wmat.T).reshape(n, ho, wo, kh, kw, cin)
            gx = col2im(gcols, h, w, stride, dilation, pad)
        return gx, gk

    return make_result(out, (x, kernel), backward)


def conv_transpose2d(x: Tensor, kernel: Tensor, pad: int = 0) -> Tensor:
    """Stride-1 transposed convolution; ``kernel`` is HWOI (out channels third).

    The adjoint of :func:`conv2d` with the same kernel read as HWIO.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    kh, kw, cout, cin = kernel.shape
    n, hi, wi, c = x.shape
    if c != cin:
        raise ShapeError(f"kernel expects {cin} input channels, got {c}")
    h = hi + kh - 1 - 2 * pad
    w = wi + kw - 1 - 2 * pad
    if h <= 0 or w <= 0:
        raise ShapeError("non-positive transposed-convolution output size")
    xmat = x.data.reshape(n * hi * wi, cin)
    kmat = kernel.data.reshape(kh * kw * cout, cin)
    cols = (xmat @ kmat.T).reshape(n, hi, wi, kh, kw, cout)
    out = col2im(cols, h, w, 1, 1, pad)

    def backward(g):
        gcols = im2col(g, kh, kw, 1, 1, pad).reshape(n * hi * wi, kh * kw * cout)
        gx = (gcols @ kmat).reshape(x.shape) if x.requires_grad else None
        gk = (gcols.T @ xmat).reshape(kernel.shape) if kernel.requires_grad else None
        return gx, gk

    return make_result(out, (x, kernel), backward)


def extract_patches(x: Tensor, size: int, stride: int = 1, pad: int = 0) -> Tensor:
    """Unroll ``size``x``size`` patches: ``(N, H, W, C)`` -> ``(N, L, size*size*C)``.

    Row layout is patch-row-major, then column, then channel.
    """
    n, h, w, c = x.shape
    if h + 2 * pad < size or w + 2 * pad < size:
        raise ShapeError(f"feature map {h}x{w} smaller than patch size {size}")
    cols = im2col(x.data, size, size, stride, 1, pad)
    ho, wo = cols.shape[1:3]
    out = cols.reshape(n, ho * wo, size * size * c)

    def backward(g):
        return (col2im(g.reshape(n, ho, wo, size, size, c), h, w, stride, 1, pad),)

    return make_result(out, (x,), backward)


def overlap_count(h: int, w: int, size: int, dtype=np.float64) -> np.ndarray:
    """Number of centred ``size``x``size`` patches covering each pixel."""
    pad = (size - 1) // 2
    ones = np.ones((1, h, w, size, size, 1), dtype=dtype)
    return col2im(ones, h, w, 1, 1, pad)[0]


def fold_average(p: Tensor, h: int, w: int, size: int) -> Tensor:
    """Inverse of centred, zero-padded :func:`extract_patches`.

    Overlapping contributions are summed and divided by the per-pixel count.
    """
    n, nq, d = p.shape
    if nq != h * w:
        raise ShapeError(f"expected {h * w} patches, got {nq}")
    c = d // (size * size)
    pad = (size - 1) // 2
    count = overlap_count(h, w, size, p.dtype)
    cols = p.data.reshape(n, h, w, size, size, c)
    out = col2im(cols, h, w, 1, 1, pad) / count

    def backward(g):
        return (im2col(g / count, size, size, 1, 1, pad).reshape(n, nq, d),)

    return make_result(out, (p,), backward)


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    n, h, w, c = x.shape
    out = x.data.repeat(factor, axis=1).repeat(factor, axis=2)

    def backward(g):
        return (g.reshape(n, h, factor, w, factor, c).sum(axis=(2, 4)),)

    return make_result(out, (x,), backward)


def pool_global(x: Tensor, kind: str = "mean") -> Tensor:
    """Per-channel reduction over all spatial positions: ``(N,H,W,C)`` -> ``(N,C)``."""
    n, h, w, c = x.shape
    flat = x.data.reshape(n, h * w, c)
    if kind == "mean":
        out = flat.mean(axis=1)

        def backward(g):
            return (np.broadcast_to(g[:, None, :] / (h * w), flat.shape).reshape(x.shape).copy(),)

    elif kind == "max":
        idx = flat.argmax(axis=1)  # first occurrence in row-major order
        out = np.take_along_axis(flat, idx[:, None, :], axis=1)[:, 0, :]

        def backward(g):
            full = np.zeros_like(flat)
            np.put_along_axis(full, idx[:, None, :], g[:, None, :], axis=1)
            return (full.reshape(x.shape),)

    else:
        raise ValueError(f"unknown pooling kind {kind!r}")
    return make_result(out, (x,), backward)
