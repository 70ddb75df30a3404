"""Binary matrix file format.

Little-endian, 32-byte header followed by the row-major payload:

    offset  size  field
    0       4     magic "TSKM"
    4       4     version (u32, currently 1)
    8       1     precision in bytes per element (u8: 4 or 8)
    9       8     rows m (u64)
    17      8     cols n (u64)
    25      7     zero padding

Readers may load any contiguous row range with a single seek, which is how
distributed reads split a file by the balanced partition rule.
"""

import struct

import numpy as np

MAGIC = b"TSKM"
VERSION = 1
_HEADER = struct.Struct("<4sIBQQ7x")

_PRECISION_TO_DTYPE = {4: np.dtype(np.float32), 8: np.dtype(np.float64)}


class MatrixFileError(ValueError):
    """Malformed header or inconsistent payload."""


def write_matrix(path, a):
    """Write a 2-d float32/float64 array to `path` in the TSKM format."""
    a = np.ascontiguousarray(a)
    if a.ndim != 2 or a.dtype not in (np.float32, np.float64):
        raise MatrixFileError(
            f"expected a 2-d float32/float64 array, got ndim={a.ndim}, {a.dtype}"
        )
    m, n = a.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, a.dtype.itemsize, m, n))
        fh.write(a.tobytes(order="C"))


def read_header(path):
    """Return (rows, cols, dtype) from a TSKM file header."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise MatrixFileError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, precision, m, n = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise MatrixFileError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise MatrixFileError(f"{path}: unsupported version {version}")
    if precision not in _PRECISION_TO_DTYPE:
        raise MatrixFileError(f"{path}: unsupported precision byte {precision}")
    return int(m), int(n), _PRECISION_TO_DTYPE[precision]


def read_rows(path, row_start, row_count):
    """Read `row_count` contiguous rows starting at `row_start`."""
    m, n, dtype = read_header(path)
    if row_start < 0 or row_start + row_count > m:
        raise MatrixFileError(
            f"{path}: row range [{row_start}, {row_start + row_count}) outside 0..{m}"
        )
    out = np.empty((row_count, n), dtype=dtype)
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size + row_start * n * dtype.itemsize)
        data = fh.read(out.nbytes)
    if len(data) != out.nbytes:
        raise MatrixFileError(f"{path}: truncated payload")
    out[:] = np.frombuffer(data, dtype=dtype).reshape(row_count, n)
    return out


def read_matrix(path):
    """Read the whole matrix."""
    m, _, _ = read_header(path)
    return read_rows(path, 0, m)
