"""Binary container mapping names to float64 arrays.

Layout (all integers little-endian)::

    magic      8 bytes   b"SLGTCKPT" (checkpoints) or b"SLGTTRCE" (attention traces)
    version    u8        currently 1
    count      u32       number of entries
    entries    count x:
        name_len u16, name (utf-8)
        ndim     u8,  dims u32 x ndim
        payload  f64 little-endian, prod(dims) values, row-major
    meta_len   u32, meta (utf-8 JSON object, may be "{}")
    crc32      u32       zlib.crc32 of every preceding byte

Entries are written in sorted name order so identical contents give
identical bytes.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"SLGTCKPT"
TRACE_MAGIC = b"SLGTTRCE"
FORMAT_VERSION = 1


class ContainerError(ValueError):
    pass


class ChecksumError(ContainerError):
    pass


class VersionError(ContainerError):
    pass


def dumps(arrays: dict, meta: dict | None = None, magic: bytes = CHECKPOINT_MAGIC) -> bytes:
    parts = [magic, struct.pack("<BI", FORMAT_VERSION, len(arrays))]
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    meta_raw = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(meta_raw)))
    parts.append(meta_raw)
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def loads(blob: bytes, magic: bytes = CHECKPOINT_MAGIC):
    """Parse a container; returns ``(arrays, meta)``."""
    if len(blob) < len(magic) + 9 or blob[: len(magic)] != magic:
        raise ContainerError("not a recognised container (bad magic)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumError("checksum mismatch: file is corrupted")
    pos = len(magic)
    version, count = struct.unpack_from("<BI", body, pos)
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported container version {version} (expected {FORMAT_VERSION})")
    pos += 5
    arrays = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", body, pos)
            pos += 1
            dims = struct.unpack_from(f"<{ndim}I", body, pos)
            pos += 4 * ndim
            n = int(np.prod(dims)) if ndim else 1
            arr = np.frombuffer(body, dtype="<f8", count=n, offset=pos).reshape(dims)
            arrays[name] = arr.astype(np.float64)
            pos += 8 * n
        (mlen,) = struct.unpack_from("<I", body, pos)
        pos += 4
        meta = json.loads(body[pos : pos + mlen].decode("utf-8"))
    except (struct.error, ValueError) as exc:
        raise ContainerError(f"truncated or malformed container: {exc}") from None
    return arrays, meta


def save(path, arrays: dict, meta: dict | None = None, magic: bytes = CHECKPOINT_MAGIC):
    Path(path).write_bytes(dumps(arrays, meta, magic))


def load(path, magic: bytes = CHECKPOINT_MAGIC):
    return loads(Path(path).read_bytes(), magic)
