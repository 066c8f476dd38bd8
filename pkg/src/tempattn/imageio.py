"""Binary Netpbm (P5 grayscale / P6 RGB) reading and writing.

Rasters are returned as float64 arrays in ``[0, 1]``: ``H x W`` for P5 and
``H x W x 3`` for P6.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


class NetpbmError(ValueError):
    pass


def _tokens(buf: bytes, count: int, pos: int) -> tuple[list[int], int]:
    values = []
    n = len(buf)
    while len(values) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and buf[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise NetpbmError(f"malformed header at byte {start}: expected an integer")
        values.append(int(buf[start:pos]))
    if pos >= n or not buf[pos:pos + 1].isspace():
        raise NetpbmError(f"malformed header at byte {pos}: expected whitespace before raster")
    return values, pos + 1


def decode(buf: bytes) -> np.ndarray:
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise NetpbmError(f"malformed header at byte 0: unsupported magic {magic!r}")
    (width, height, maxval), offset = _tokens(buf, 3, 2)
    if width <= 0 or height <= 0:
        raise NetpbmError(f"malformed header at byte {offset}: non-positive size {width}x{height}")
    if not 0 < maxval < 65536:
        raise NetpbmError(f"malformed header at byte {offset}: maxval {maxval} out of range")
    channels = 3 if magic == b"P6" else 1
    sample = 1 if maxval < 256 else 2
    expected = width * height * channels * sample
    actual = len(buf) - offset
    if actual < expected:
        raise NetpbmError(f"truncated raster at byte {offset}: expected {expected} bytes, got {actual}")
    dtype = np.uint8 if sample == 1 else np.dtype(">u2")
    raster = np.frombuffer(buf, dtype=dtype, count=width * height * channels, offset=offset)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return raster.reshape(shape).astype(np.float64) / maxval


def read_image(path) -> np.ndarray:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return decode(buf)
    except NetpbmError as exc:
        raise NetpbmError(f"{path}: {exc}") from None


def encode(img: np.ndarray, comment: str | None = None) -> bytes:
    img = np.asarray(img)
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"expected H x W or H x W x 3 image, got shape {img.shape}")
    raster = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = magic + b"\n"
    if comment:
        for line in comment.splitlines():
            header += b"# " + line.encode("ascii", "replace") + b"\n"
    header += f"{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    return header + raster.tobytes()


def write_image(path, img: np.ndarray, comment: str | None = None) -> None:
    try:
        Path(path).write_bytes(encode(img, comment))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


MASK_COMMENT = "hole mask: 0 (black) = known pixel, 255 (white) = missing pixel"


def write_mask(path, mask: np.ndarray) -> None:
    write_image(path, (np.asarray(mask) > 0).astype(np.float64), MASK_COMMENT)


def read_mask(path) -> np.ndarray:
    img = read_image(path)
    if img.ndim == 3:
        img = img.mean(axis=-1)
    return (img >= 0.5).astype(np.uint8)
