"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"MHTM"  u32 version
    u32 n    n x tensor                       # model tensors
    u32 n    n x tensor                       # optimizer state
    u32 len  len bytes UTF-8 JSON             # RNG state
    u64 step

    tensor := u16 name_len, name bytes, u8 dtype code, u8 rank,
              rank x u64 dims, little-endian payload
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"MHTM"
VERSION = 1

DTYPE_CODES = {
    np.dtype("float32"): 0,
    np.dtype("float64"): 1,
    np.dtype("int64"): 2,
    np.dtype("uint8"): 3,
    np.dtype("uint64"): 4,
}
CODE_DTYPES = {code: dt for dt, code in DTYPE_CODES.items()}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)
    rng_state: dict = field(default_factory=dict)
    step: int = 0


def _write_tensors(out: io.BytesIO, tensors: dict[str, np.ndarray]) -> None:
    out.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype not in DTYPE_CODES:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for tensor {name!r}")
        raw = name.encode("utf-8")
        out.write(struct.pack("<H", len(raw)))
        out.write(raw)
        out.write(struct.pack("<BB", DTYPE_CODES[arr.dtype], arr.ndim))
        out.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint at byte {self.pos}: need {n} more bytes")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_tensors(r: _Reader) -> dict[str, np.ndarray]:
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        code, rank = r.unpack("<BB")
        if code not in CODE_DTYPES:
            raise CheckpointError(f"unknown dtype code {code} for tensor {name!r}")
        dims = r.unpack(f"<{rank}Q") if rank else ()
        dtype = CODE_DTYPES[code].newbyteorder("<")
        n_bytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        arr = np.frombuffer(r.take(n_bytes), dtype=dtype).reshape(dims)
        tensors[name] = arr.astype(CODE_DTYPES[code])
    return tensors


def dumps(ckpt: Checkpoint) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", VERSION))
    _write_tensors(out, ckpt.tensors)
    _write_tensors(out, ckpt.optimizer)
    rng = json.dumps(ckpt.rng_state, sort_keys=True).encode("utf-8")
    out.write(struct.pack("<I", len(rng)))
    out.write(rng)
    out.write(struct.pack("<Q", ckpt.step))
    return out.getvalue()


def loads(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    tensors = _read_tensors(r)
    optimizer = _read_tensors(r)
    (rng_len,) = r.unpack("<I")
    rng_state = json.loads(r.take(rng_len).decode("utf-8"))
    (step,) = r.unpack("<Q")
    return Checkpoint(tensors=tensors, optimizer=optimizer, rng_state=rng_state, step=step)


def save(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        tmp.write_bytes(dumps(ckpt))
        tmp.replace(path)
    except OSError as exc:
        raise OSError(f"cannot write checkpoint {path}: {exc.strerror}") from exc


def load(path) -> Checkpoint:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read checkpoint {path}: {exc.strerror}") from exc
    return loads(buf)
