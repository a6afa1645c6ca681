"""File formats used between pipeline stages.

Matrices travel either as headerless row-major CSV or as DDRP binary:

    offset  size  content
    0       4     b"DDRP"
    4       2     version (u16, = 1)
    6       4     rows (u32)
    10      4     cols (u32)
    14      8*rc  float64 values, row-major

All integers and floats are little-endian. Images are 8-bit PGM (P2 or P5).
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"DDRP"
VERSION = 1
_HEADER = struct.Struct("<4sHII")

MATRIX_SUFFIXES = (".ddrp", ".csv")
IMAGE_SUFFIXES = (".pgm",)


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        return a.reshape(-1, 1)
    if a.ndim != 2:
        raise FormatError(f"expected a vector or matrix, got ndim={a.ndim}")
    return a


# DDRP binary ---------------------------------------------------------------

def ddrp_bytes(a) -> bytes:
    """Serialize a vector (stored as a column) or matrix to DDRP bytes."""
    m = _as_matrix(a)
    rows, cols = m.shape
    return _HEADER.pack(MAGIC, VERSION, rows, cols) + np.ascontiguousarray(m, dtype="<f8").tobytes()


def parse_ddrp(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FormatError("truncated DDRP header")
    magic, version, rows, cols = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported DDRP version {version}")
    expected = _HEADER.size + 8 * rows * cols
    if len(buf) != expected:
        raise FormatError(f"DDRP payload has {len(buf)} bytes, expected {expected}")
    data = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size, count=rows * cols)
    return data.reshape(rows, cols).astype(np.float64)


def write_ddrp(path, a) -> None:
    Path(path).write_bytes(ddrp_bytes(a))


def read_ddrp(path) -> np.ndarray:
    return parse_ddrp(Path(path).read_bytes())


# CSV -----------------------------------------------------------------------

def write_csv_matrix(path, a) -> None:
    # %.17g round-trips every float64
    np.savetxt(path, _as_matrix(a), delimiter=",", fmt="%.17g")


def read_csv_matrix(path) -> np.ndarray:
    try:
        m = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return m


def read_matrix(path) -> np.ndarray:
    """Read a matrix, dispatching on the file suffix (.ddrp or .csv)."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ddrp":
        return read_ddrp(path)
    if suffix == ".csv":
        return read_csv_matrix(path)
    raise FormatError(f"unknown matrix format: {path.name}")


def write_matrix(path, a) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        write_csv_matrix(path, a)
    else:
        write_ddrp(path, a)


# PGM -----------------------------------------------------------------------

def _pgm_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    """Read `count` whitespace-separated header tokens, skipping comments."""
    tokens: list[bytes] = []
    pos = 0
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise FormatError("truncated PGM header")
        if buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(buf[start:pos])
    return tokens, pos


def parse_pgm(buf: bytes) -> np.ndarray:
    """Decode P2/P5 bytes into a float image with intensities in [0, 1]."""
    tokens, pos = _pgm_tokens(buf, 4)
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError("non-integer PGM header field") from exc
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise FormatError(f"invalid PGM header {width}x{height} maxval={maxval}")
    count = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates header and raster
        raster = buf[pos + 1:]
        dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
        if len(raster) < count * dtype.itemsize:
            raise FormatError("truncated P5 raster")
        values = np.frombuffer(raster, dtype=dtype, count=count)
    elif magic == b"P2":
        try:
            values = np.array(buf[pos:].split(), dtype=np.int64)
        except ValueError as exc:
            raise FormatError("non-integer P2 sample") from exc
        if values.size < count:
            raise FormatError("truncated P2 raster")
        values = values[:count]
    else:
        raise FormatError(f"not a PGM file (magic {magic!r})")
    if values.max(initial=0) > maxval:
        raise FormatError("PGM sample exceeds maxval")
    return values.reshape(height, width).astype(np.float64) / maxval


def quantize(image) -> np.ndarray:
    """Map [0, 1] intensities to 8-bit levels (clamping out-of-range values)."""
    image = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.rint(image * 255.0).astype(np.uint8)


def pgm_bytes(image, binary: bool = True) -> bytes:
    q = quantize(image)
    if q.ndim != 2:
        raise FormatError("PGM images must be two-dimensional")
    height, width = q.shape
    if binary:
        return f"P5\n{width} {height}\n255\n".encode("ascii") + q.tobytes()
    lines = [f"P2\n{width} {height}\n255"]
    lines.extend(" ".join(str(v) for v in row) for row in q)
    return ("\n".join(lines) + "\n").encode("ascii")


def write_pgm(path, image, binary: bool = True) -> None:
    Path(path).write_bytes(pgm_bytes(image, binary=binary))


def read_pgm(path) -> np.ndarray:
    return parse_pgm(Path(path).read_bytes())


def read_item(path) -> np.ndarray:
    """Read one corpus item: a PGM image or a DDRP/CSV matrix."""
    path = Path(path)
    if path.suffix.lower() in IMAGE_SUFFIXES:
        return read_pgm(path)
    return read_matrix(path)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
