"""Vector file formats.

Binary: 8-byte header, then ``count`` little-endian binary32 values::

    offset 0  4 bytes  magic  b"TPF1"
    offset 4  4 bytes  count  uint32, little-endian
    offset 8  4*count  data   float32, little-endian

Text: decimal numbers separated by whitespace and/or commas; ``#`` starts a
comment that runs to the end of the line.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

MAGIC = b"TPF1"
HEADER = np.dtype([("magic", "S4"), ("count", "<u4")])
FORMATS = ("auto", "binary", "text")


class FormatError(ValueError):
    pass


def encode_binary(values) -> bytes:
    data = np.ascontiguousarray(values, dtype="<f4").reshape(-1)
    header = np.array([(MAGIC, data.size)], dtype=HEADER)
    return header.tobytes() + data.tobytes()


def decode_binary(blob: bytes) -> np.ndarray:
    if len(blob) < HEADER.itemsize:
        raise FormatError(f"binary input too short for header ({len(blob)} bytes)")
    head = np.frombuffer(blob[:HEADER.itemsize], dtype=HEADER)[0]
    if head["magic"] != MAGIC:
        raise FormatError(f"bad magic {bytes(head['magic'])!r}, expected {MAGIC!r}")
    count = int(head["count"])
    payload = len(blob) - HEADER.itemsize
    if payload != 4 * count:
        raise FormatError(f"header says {count} values but payload has {payload} bytes")
    return np.frombuffer(blob, dtype="<f4", offset=HEADER.itemsize).astype(np.float32)


def parse_text(text: str) -> np.ndarray:
    text = re.sub(r"#[^\n]*", "", text)
    tokens = [t for t in re.split(r"[\s,\[\]]+", text) if t]
    try:
        return np.array([float(t) for t in tokens], dtype=np.float32)
    except ValueError as exc:
        raise FormatError(f"malformed number in text input: {exc}") from None


def format_text(values) -> str:
    return "\n".join(np.format_float_positional(np.float32(v), unique=True, trim="-")
                     for v in np.asarray(values, np.float32)) + "\n"


def read_vector(path: str | Path, fmt: str = "auto") -> np.ndarray:
    blob = Path(path).read_bytes()
    if fmt == "binary" or (fmt == "auto" and blob[:4] == MAGIC):
        return decode_binary(blob)
    try:
        return parse_text(blob.decode("utf-8"))
    except UnicodeDecodeError:
        raise FormatError(f"{path}: neither a {MAGIC.decode()} binary file nor UTF-8 text") from None


def write_vector(path: str | Path, values, fmt: str = "binary") -> None:
    if fmt == "text":
        Path(path).write_text(format_text(values))
    else:
        Path(path).write_bytes(encode_binary(values))
