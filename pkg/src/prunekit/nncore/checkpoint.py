"""Binary checkpoint container for model state.

Layout, all little-endian:

    magic      8 bytes  b"PRUNEKIT"
    version    u32      currently 1
    hash       32 bytes raw sha256 of the template config (see ArchTemplate.template_hash)
    count      u32      number of arrays
    per array:
        name_len u16, name utf-8, dtype u8 (0=f32, 1=f64, 2=i64), ndim u8,
        dims u32 * ndim, raw value bytes

Arrays are stored in sorted name order so files are byte-for-byte
reproducible for identical state.
"""
from __future__ import annotations

import struct

import numpy as np

from ..errors import DataFormatError
from ..util import write_bytes_atomic

MAGIC = b"PRUNEKIT"
VERSION = 1

_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1, np.dtype(np.int64): 2}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def _pack_arrays(arrays: dict, template_hash_hex: str) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION), bytes.fromhex(template_hash_hex),
             struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype not in _DTYPE_CODES:
            raise DataFormatError(f"array {name!r} has unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        little = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        parts.append(little.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise DataFormatError("checkpoint truncated", offset=self.pos)
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _unpack_arrays(blob: bytes):
    r = _Reader(blob)
    if r.take(len(MAGIC)) != MAGIC:
        raise DataFormatError("bad magic; not a checkpoint file", offset=0)
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}", offset=8)
    hash_hex = r.take(32).hex()
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        code, ndim = r.unpack("<BB")
        if code not in _CODE_DTYPES:
            raise DataFormatError(f"array {name!r}: unknown dtype code {code}",
                                  offset=r.pos - 2)
        shape = r.unpack(f"<{ndim}I")
        dtype = _CODE_DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        data = r.take(nbytes)
        arrays[name] = np.frombuffer(data, dtype=dtype.newbyteorder("<")).reshape(shape).astype(dtype)
    if r.pos != len(blob):
        raise DataFormatError("trailing bytes after last array", offset=r.pos)
    return hash_hex, arrays


def save_state(path, arrays: dict, template_hash_hex: str) -> None:
    """Write a raw name->array mapping tagged with a template hash."""
    write_bytes_atomic(path, _pack_arrays(arrays, template_hash_hex))


def load_state(path):
    """Read back (template_hash_hex, {name: array})."""
    with open(path, "rb") as fh:
        return _unpack_arrays(fh.read())


def save_model(path, net) -> None:
    save_state(path, net.state_arrays(), net.template.template_hash())


def load_model(path, net):
    """Load a checkpoint into an existing Network; hashes must match."""
    hash_hex, arrays = load_state(path)
    own = net.template.template_hash()
    if hash_hex != own:
        raise DataFormatError(
            f"checkpoint was written for template {hash_hex[:12]}, model is {own[:12]}"
        )
    net.load_state(arrays)
    return net
