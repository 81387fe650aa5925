"""Named-tensor weight files.

Layout: magic ``FEB1``, one version byte, a four-byte entry count, then per
entry a name (u16 length + UTF-8 bytes), a dtype code (0 = float32), a rank
byte and u32 dims; after the header come the raw little-endian float32
payloads in header order.  Header order is name-sorted so identical maps
always produce identical files.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FEB1"
VERSION = 1
_DTYPE_F32 = 0


class WeightFormatError(ValueError):
    """A weight file is malformed: bad magic, version, header, or payload size."""


def save_tensor_map(arrays, path):
    """Write a ``{name: float array}`` map; returns the byte count written."""
    entries = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        entries.append((name, arr))
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<B", VERSION)
    blob += struct.pack("<I", len(entries))
    for name, arr in entries:
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded)) + encoded
        blob += struct.pack("<BB", _DTYPE_F32, arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
    for _, arr in entries:
        blob += arr.tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.path = path
        self.pos = 0

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.blob):
            raise WeightFormatError(f"{self.path}: truncated header")
        values = struct.unpack_from(fmt, self.blob, self.pos)
        self.pos += size
        return values


def load_tensor_map(path):
    """Read a weight file back into ``{name: float32 array}``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise WeightFormatError(f"{path}: bad magic {blob[:4]!r}")
    reader = _Reader(blob, path)
    reader.pos = 4
    (version,) = reader.take("<B")
    if version != VERSION:
        raise WeightFormatError(f"{path}: unsupported version {version}")
    (count,) = reader.take("<I")
    headers = []
    for _ in range(count):
        (name_len,) = reader.take("<H")
        if reader.pos + name_len > len(blob):
            raise WeightFormatError(f"{path}: truncated header")
        name = blob[reader.pos:reader.pos + name_len].decode("utf-8")
        reader.pos += name_len
        dtype_code, ndim = reader.take("<BB")
        if dtype_code != _DTYPE_F32:
            raise WeightFormatError(f"{path}: unknown dtype code {dtype_code}")
        shape = reader.take(f"<{ndim}I")
        headers.append((name, shape))
    arrays = {}
    for name, shape in headers:
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = n * 4
        if reader.pos + nbytes > len(blob):
            raise WeightFormatError(
                f"{path}: payload for {name!r} shorter than header shape {shape}")
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=reader.pos)
        arrays[name] = arr.reshape(shape).astype(np.float32)
        reader.pos += nbytes
    if reader.pos != len(blob):
        raise WeightFormatError(f"{path}: {len(blob) - reader.pos} trailing bytes")
    return arrays
