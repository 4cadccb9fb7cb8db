"""Matrix files: a small binary container and plain CSV.

Binary layout (all little-endian)::

    offset  size  field
    0       4     magic b"MPDN"
    4       4     version (uint32) = 1
    8       4     layout (uint32), 0 = row-major
    12      4     reserved (uint32) = 0
    16      8     M (uint64)
    24      8     N (uint64)
    32      8*M*N payload, float64
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import MatrixFileError

MAGIC = b"MPDN"
VERSION = 1
LAYOUT_ROW_MAJOR = 0
_HEADER = struct.Struct("<4sIIIQQ")
# refuse to allocate more than this many entries from an untrusted header
MAX_ENTRIES = 2 ** 31


class UnreadableFile(MatrixFileError):
    code = "E_UNREADABLE"


class MalformedHeader(MatrixFileError):
    code = "E_HEADER"


class DimensionOverflow(MatrixFileError):
    code = "E_OVERFLOW"


def store_binary(path, A) -> None:
    A = np.ascontiguousarray(A, dtype="<f8")
    if A.ndim != 2:
        raise ValueError("only 2-D matrices can be stored")
    M, N = A.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, LAYOUT_ROW_MAJOR, 0, M, N))
        fh.write(A.tobytes(order="C"))


def load_binary(path) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise UnreadableFile(f"cannot read {path}: {exc.strerror or exc}") from exc
    if len(raw) < _HEADER.size:
        raise MalformedHeader(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, version, layout, _reserved, M, N = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise MalformedHeader(f"{path}: bad magic {magic!r}")
    if version != VERSION or layout != LAYOUT_ROW_MAJOR:
        raise MalformedHeader(f"{path}: unsupported version {version} / layout {layout}")
    if M * N > MAX_ENTRIES:
        raise DimensionOverflow(f"{path}: header claims {M} x {N} entries")
    payload = raw[_HEADER.size:]
    if len(payload) != 8 * M * N:
        raise MalformedHeader(f"{path}: payload has {len(payload)} bytes, header implies {8 * M * N}")
    return np.frombuffer(payload, dtype="<f8").reshape(M, N).astype(float)


def store_csv(path, A) -> None:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("only 2-D matrices can be stored")
    with open(path, "w", encoding="utf-8") as fh:
        for row in A:
            fh.write(",".join(repr(float(x)) for x in row))
            fh.write("\n")


def load_csv(path) -> np.ndarray:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc
    try:
        rows = [[float(tok) for tok in ln.split(",")] for ln in lines]
    except ValueError as exc:
        raise MalformedHeader(f"{path}: non-numeric CSV entry ({exc})") from exc
    if not rows or len({len(r) for r in rows}) != 1:
        raise MalformedHeader(f"{path}: CSV rows are empty or ragged")
    return np.array(rows, dtype=float)


def is_csv(path) -> bool:
    return os.path.splitext(str(path))[1].lower() == ".csv"


def load_matrix(path) -> np.ndarray:
    """Load by extension: ``.csv`` as text, anything else as the binary container."""
    return load_csv(path) if is_csv(path) else load_binary(path)


def store_matrix(path, A) -> None:
    if is_csv(path):
        store_csv(path, A)
    else:
        store_binary(path, A)
