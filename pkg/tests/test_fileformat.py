import numpy as np
import pytest

from twopass.fileformat import (MAGIC, FormatError, decode_binary, encode_binary, format_text, parse_text,
                                read_vector, write_vector)


def test_binary_layout():
    blob = encode_binary([1.0, -2.5])
    assert blob[:4] == MAGIC == b"TPF1"
    assert int.from_bytes(blob[4:8], "little") == 2
    assert blob[8:] == np.array([1.0, -2.5], "<f4").tobytes()
    assert decode_binary(blob).tolist() == [1.0, -2.5]


def test_binary_errors():
    with pytest.raises(FormatError, match="short"):
        decode_binary(b"TPF")
    with pytest.raises(FormatError, match="magic"):
        decode_binary(b"XXXX\x00\x00\x00\x00")
    with pytest.raises(FormatError, match="payload"):
        decode_binary(encode_binary([1, 2])[:-1])


def test_text():
    assert parse_text("1, 2\n3 # comment 4\n[5]").tolist() == [1, 2, 3, 5]
    assert parse_text("").size == 0
    with pytest.raises(FormatError):
        parse_text("1 two 3")
    assert format_text([0.1, 2]) == "0.1\n2\n"


@pytest.mark.parametrize("fmt", ["binary", "text"])
def test_roundtrip(tmp_path, fmt, rng):
    x = rng.normal(0, 100, 50).astype(np.float32)
    path = tmp_path / f"v.{fmt}"
    write_vector(path, x, fmt)
    assert np.array_equal(read_vector(path), x)
    assert np.array_equal(read_vector(path, fmt), x)


def test_empty_binary(tmp_path):
    p = tmp_path / "e.bin"
    write_vector(p, [])
    assert read_vector(p).size == 0
