"""Binary checkpoint container.

Layout (little-endian)::

    b"HVIS" | version u32 | segment count u32
    per segment: name length u32 | utf-8 name | kind u8 | ndim u32 | dims u64 * ndim | payload

Kind 0 payloads are float64 arrays; kind 1 payloads are utf-8 text (ndim 1,
dims = byte length). Segment order is preserved, so load -> save reproduces
the file byte for byte.
"""
from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"HVIS"
VERSION = 1
KIND_FLOATS = 0
KIND_TEXT = 1


def dumps(segments: "OrderedDict[str, np.ndarray | str]") -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(segments))]
    for name, value in segments.items():
        raw_name = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw_name)))
        out.append(raw_name)
        if isinstance(value, str):
            payload = value.encode("utf-8")
            out.append(struct.pack("<BIQ", KIND_TEXT, 1, len(payload)))
            out.append(payload)
        else:
            arr = np.ascontiguousarray(value, dtype="<f8")
            out.append(struct.pack("<BI", KIND_FLOATS, arr.ndim))
            out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            out.append(arr.tobytes())
    return b"".join(out)


def loads(blob: bytes) -> "OrderedDict[str, np.ndarray | str]":
    if blob[:4] != MAGIC:
        raise CheckpointError("not an HVIS checkpoint (bad magic bytes)")
    try:
        version, count = struct.unpack_from("<II", blob, 4)
    except struct.error:
        raise CheckpointError("truncated checkpoint header") from None
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    pos = 12
    segments: OrderedDict = OrderedDict()
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + n].decode("utf-8")
            pos += n
            kind, ndim = struct.unpack_from("<BI", blob, pos)
            pos += 5
            dims = struct.unpack_from(f"<{ndim}Q", blob, pos)
            pos += 8 * ndim
            if kind == KIND_TEXT:
                size = dims[0]
                segments[name] = blob[pos:pos + size].decode("utf-8")
                pos += size
            elif kind == KIND_FLOATS:
                size = int(np.prod(dims)) * 8
                if pos + size > len(blob):
                    raise CheckpointError(f"segment {name!r} is truncated")
                segments[name] = np.frombuffer(blob, dtype="<f8", count=size // 8, offset=pos).reshape(dims).copy()
                pos += size
            else:
                raise CheckpointError(f"segment {name!r} has unknown kind {kind}")
    except struct.error:
        raise CheckpointError("truncated checkpoint") from None
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes after last segment")
    return segments


def save(path, segments) -> None:
    Path(path).write_bytes(dumps(segments))


def load(path) -> "OrderedDict[str, np.ndarray | str]":
    return loads(Path(path).read_bytes())
