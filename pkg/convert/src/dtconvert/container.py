"""Writer (and test-support reader) for the engine's tensor container.

Implemented independently from the engine, straight off the published
layout: 8-byte magic, u64-LE header length, UTF-8 JSON header with
"tensors" and "metadata", then raw little-endian f32 bytes.  Tensors are
laid out back to back in ascending name order; the header uses sorted
keys and compact separators so identical content yields identical bytes.
"""
import json
import struct

import numpy as np

from .errors import ConversionError

MODEL_MAGIC = b"DTWT0001"


def write_archive(path, magic: bytes, tensors: dict, metadata: dict) -> None:
    records = {}
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw = arr.tobytes()
        records[name] = {
            "dtype": "f32",
            "shape": list(arr.shape),
            "offset": offset,
            "length": len(raw),
        }
        blobs.append(raw)
        offset += len(raw)

    header = json.dumps(
        {"tensors": records, "metadata": metadata},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def read_archive(path, magic: bytes):
    """Parse an archive back into ({name: array}, metadata)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != magic:
        raise ConversionError(f"{path}: magic {raw[:8]!r} != {magic!r}")
    (header_len,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + header_len].decode("utf-8"))
    data = raw[16 + header_len:]
    tensors = {}
    for name, rec in header["tensors"].items():
        block = data[rec["offset"]:rec["offset"] + rec["length"]]
        tensors[name] = np.frombuffer(block, dtype="<f4").reshape(rec["shape"])
    return tensors, header["metadata"]
