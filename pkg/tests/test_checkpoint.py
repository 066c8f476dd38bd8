import struct

import numpy as np
import pytest

from tempattn.checkpoint import Checkpoint, CheckpointError, dumps, load, loads, save


def _sample(rng):
    return Checkpoint(
        tensors={"a": rng.standard_normal((2, 3)).astype(np.float32), "b": rng.standard_normal(4),
                 "scalar": np.array(1.5), "bytes": np.frombuffer(b"cfg", dtype=np.uint8)},
        optimizer={"m/a": np.arange(6, dtype=np.int64).reshape(2, 3)},
        rng_state=np.random.default_rng(3).bit_generator.state,
        step=2**40 + 7,
    )


def test_round_trip_bit_exact(tmp_path, rng):
    ck = _sample(rng)
    save(tmp_path / "x.ckpt", ck)
    back = load(tmp_path / "x.ckpt")
    assert list(back.tensors) == list(ck.tensors) and back.step == ck.step
    for k, v in ck.tensors.items():
        assert back.tensors[k].dtype == v.dtype and back.tensors[k].tobytes() == v.tobytes()
    assert back.rng_state == ck.rng_state
    assert dumps(back) == dumps(ck)
    assert not (tmp_path / "x.ckpt.tmp").exists()


def test_header_layout(rng):
    buf = dumps(_sample(rng))
    assert buf[:4] == b"MHTM" and struct.unpack("<I", buf[4:8]) == (1,)
    assert struct.unpack("<Q", buf[-8:]) == (2**40 + 7,)


def test_rng_state_restores_stream():
    g = np.random.default_rng(11)
    g.random(5)
    back = loads(dumps(Checkpoint(rng_state=g.bit_generator.state)))
    h = np.random.default_rng()
    h.bit_generator.state = back.rng_state
    assert g.random() == h.random()


@pytest.mark.parametrize("mutate", [lambda b: b"XXXX" + b[4:], lambda b: b[:-3], lambda b: b[:4] + b"\x09\0\0\0" + b[8:]])
def test_corrupt(rng, mutate):
    with pytest.raises(CheckpointError):
        loads(mutate(dumps(_sample(rng))))


def test_unsupported_dtype():
    with pytest.raises(CheckpointError):
        dumps(Checkpoint(tensors={"c": np.zeros(2, dtype=np.complex64)}))
