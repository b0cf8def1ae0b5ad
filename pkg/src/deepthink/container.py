"""Shared single-file tensor container.

Layout, byte-exact:

    bytes 0..7    magic (8 ASCII bytes, includes the format version)
    bytes 8..15   header length H as unsigned 64-bit little-endian
    bytes 16..16+H-1
                  UTF-8 JSON: {"tensors": {name: {"dtype": "f32",
                  "shape": [..], "offset": o, "length": n}}, "metadata": {..}}
    bytes 16+H..  raw tensor data, little-endian float32

Offsets are relative to the start of the data section. The writer sorts
tensor names and packs records back to back, so identical inputs produce
identical bytes.
"""

from __future__ import annotations

import json
import struct
from typing import Mapping

import numpy as np

from .errors import CorruptionError, FormatError, StorageError

_LEN_FMT = "<Q"
_DTYPES = {"f32": np.dtype("<f4")}


def write_container(
    path: str,
    magic: bytes,
    tensors: Mapping[str, np.ndarray],
    metadata: Mapping,
) -> None:
    if len(magic) != 8:
        raise FormatError(f"magic must be 8 bytes, got {len(magic)}")
    records = {}
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=np.dtype("<f4"))
        blob = arr.tobytes()
        records[name] = {
            "dtype": "f32",
            "shape": list(arr.shape),
            "offset": offset,
            "length": len(blob),
        }
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"tensors": records, "metadata": dict(metadata)},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(magic)
            fh.write(struct.pack(_LEN_FMT, len(header)))
            fh.write(header)
            for blob in blobs:
                fh.write(blob)
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def read_container(path: str, magic: bytes):
    """Returns (tensors dict, metadata dict). Rejects wrong magic, truncated
    files, and records that point outside the data section."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc

    if len(raw) < 16:
        raise CorruptionError(f"{path}: too short to hold magic and header length")
    if raw[:8] != magic:
        raise FormatError(
            f"{path}: magic {raw[:8]!r} is not {magic.decode('ascii')}"
        )
    (header_len,) = struct.unpack(_LEN_FMT, raw[8:16])
    if 16 + header_len > len(raw):
        raise CorruptionError(f"{path}: header length {header_len} exceeds file")
    try:
        header = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
        records = header["tensors"]
        metadata = header["metadata"]
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}") from exc

    data = raw[16 + header_len :]
    tensors = {}
    for name, rec in records.items():
        try:
            dtype = _DTYPES[rec["dtype"]]
            shape = tuple(int(s) for s in rec["shape"])
            off, length = int(rec["offset"]), int(rec["length"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: bad record for {name!r}: {exc}") from exc
        if length != int(np.prod(shape, dtype=np.int64)) * dtype.itemsize:
            raise FormatError(
                f"{path}: record {name!r} length {length} does not match "
                f"shape {shape}"
            )
        if off < 0 or off + length > len(data):
            raise CorruptionError(
                f"{path}: record {name!r} points outside the data section"
            )
        tensors[name] = np.frombuffer(
            data, dtype=dtype, count=length // dtype.itemsize, offset=off
        ).reshape(shape).copy()
    return tensors, metadata
