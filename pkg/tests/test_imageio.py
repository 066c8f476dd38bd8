import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from tempattn.imageio import NetpbmError, decode, encode, read_image, read_mask, write_image, write_mask


def test_known_p6_fixture():
    buf = b"P6\n2 2\n255\n" + bytes([0, 0, 0, 255, 0, 0, 0, 255, 0, 51, 102, 204])
    img = decode(buf)
    assert img.shape == (2, 2, 3)
    np.testing.assert_allclose(img[0, 1], [1, 0, 0])
    np.testing.assert_allclose(img[1, 1], [0.2, 0.4, 0.8])


def test_comments_and_sixteen_bit():
    buf = b"P5\n# hello\n2 1\n# more\n65535\n" + bytes([0, 0, 255, 255])
    np.testing.assert_allclose(decode(buf), [[0.0, 1.0]])


@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3))))
def test_round_trip_bit_exact(raw):
    buf = encode(raw / 255.0)
    assert encode(decode(buf)) == buf
    np.testing.assert_array_equal(np.round(decode(buf) * 255).astype(np.uint8), raw)


def test_truncated_raster_names_byte_counts():
    with pytest.raises(NetpbmError, match=r"expected 12 bytes, got 5"):
        decode(b"P6\n2 2\n255\n" + bytes(5))


@pytest.mark.parametrize("buf,offset", [(b"P3\n1 1\n255\n", 0), (b"P5\n1 x\n255\n", 5),
                                        (b"P5\n1 1\n255", 10), (b"P5 0 1 255\n", 11)])
def test_malformed_header_reports_offset(buf, offset):
    with pytest.raises(NetpbmError, match=f"byte {offset}"):
        decode(buf)


def test_file_round_trip(tmp_path, rng):
    img = np.round(rng.random((5, 4, 3)) * 255) / 255
    write_image(tmp_path / "a.ppm", img)
    np.testing.assert_array_equal(read_image(tmp_path / "a.ppm"), img)


def test_mask_convention(tmp_path):
    m = np.array([[0, 1], [1, 0]], dtype=np.uint8)
    write_mask(tmp_path / "m.pgm", m)
    raw = (tmp_path / "m.pgm").read_bytes()
    assert raw.startswith(b"P5\n# hole mask: 0 (black) = known")
    assert raw.endswith(bytes([0, 255, 255, 0]))
    np.testing.assert_array_equal(read_mask(tmp_path / "m.pgm"), m)


def test_missing_file_names_path(tmp_path):
    with pytest.raises(OSError, match="nope.ppm"):
        read_image(tmp_path / "nope.ppm")
