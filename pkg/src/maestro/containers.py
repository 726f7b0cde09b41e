"""Versioned binary container used by take files and model checkpoints.

Layout (all integers little-endian):

    magic     4 bytes  b"MCT1"
    kind      u16 length + utf-8 bytes     (e.g. "take", "lstm-checkpoint")
    meta      u32 length + utf-8 JSON      (sorted keys, compact separators)
    n_arrays  u16
    per array:
        name  u16 length + utf-8 bytes
        dtype u16 length + ascii bytes     ("<f8" or "<i8")
        ndim  u16, then ndim * u64 shape
        data  raw C-order bytes

Writing the same content twice yields byte-identical files; there are
no timestamps or platform-dependent fields.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from .errors import ContainerFormatError

MAGIC = b"MCT1"
_ALLOWED_DTYPES = ("<f8", "<i8")


def _write_bytes(fh, payload: bytes, width: str):
    fh.write(struct.pack(width, len(payload)))
    fh.write(payload)


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ContainerFormatError("container truncated")
    return data


def _read_len_prefixed(fh, width: str) -> bytes:
    (n,) = struct.unpack(width, _read_exact(fh, struct.calcsize(width)))
    return _read_exact(fh, n)


def write_container(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    _write_bytes(buf, kind.encode("utf-8"), "<H")
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    _write_bytes(buf, meta_bytes, "<I")
    buf.write(struct.pack("<H", len(arrays)))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype == np.float64:
            dtype = "<f8"
        elif arr.dtype == np.int64:
            dtype = "<i8"
        else:
            raise ContainerFormatError(f"array {name!r} must be float64 or int64, got {arr.dtype}")
        arr = arr.astype(np.dtype(dtype), copy=False)
        _write_bytes(buf, name.encode("utf-8"), "<H")
        _write_bytes(buf, dtype.encode("ascii"), "<H")
        buf.write(struct.pack("<H", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<Q", dim))
        buf.write(arr.tobytes(order="C"))
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def read_container(path, expected_kind: str | None = None):
    """Returns (kind, meta, arrays)."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise ContainerFormatError("bad magic: not a maestro container")
        kind = _read_len_prefixed(fh, "<H").decode("utf-8")
        if expected_kind is not None and kind != expected_kind:
            raise ContainerFormatError(f"expected a {expected_kind!r} container, found {kind!r}")
        try:
            meta = json.loads(_read_len_prefixed(fh, "<I").decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise ContainerFormatError(f"corrupt metadata block: {exc}") from None
        (n_arrays,) = struct.unpack("<H", _read_exact(fh, 2))
        arrays = {}
        for _ in range(n_arrays):
            name = _read_len_prefixed(fh, "<H").decode("utf-8")
            dtype = _read_len_prefixed(fh, "<H").decode("ascii")
            if dtype not in _ALLOWED_DTYPES:
                raise ContainerFormatError(f"array {name!r} has unsupported dtype {dtype!r}")
            (ndim,) = struct.unpack("<H", _read_exact(fh, 2))
            shape = tuple(
                struct.unpack("<Q", _read_exact(fh, 8))[0] for _ in range(ndim)
            )
            count = int(np.prod(shape)) if shape else 1
            raw = _read_exact(fh, count * 8)
            arrays[name] = np.frombuffer(raw, dtype=np.dtype(dtype)).reshape(shape).copy()
        trailing = fh.read(1)
        if trailing:
            raise ContainerFormatError("trailing bytes after container payload")
    return kind, meta, arrays
