"""Persistence of optimized KV state as a DTKV archive.

A stored state is only meaningful against the exact model that produced it,
so every archive carries the producing model's fingerprint and the loader
refuses anything else.
"""

from __future__ import annotations

import re

from .container import read_container, write_container
from .errors import CompatibilityError, FormatError
from .model import KVState, LayerKV

MAGIC = b"DTKV0001"

_NAME = re.compile(r"^layer(\d+)\.(k|v)$")


def save_kv(state: KVState, fingerprint: str, path: str) -> None:
    """Write state to path. Tensor names are layer{l}.k / layer{l}.v."""
    tensors = {}
    for l, layer in enumerate(state.layers):
        tensors[f"layer{l}.k"] = layer.keys
        tensors[f"layer{l}.v"] = layer.values
    write_container(
        path, MAGIC, tensors,
        metadata={"T": state.step, "fingerprint": fingerprint},
    )


def load_kv(path: str, expected_fingerprint: str) -> KVState:
    tensors, metadata = read_container(path, MAGIC)

    stored = metadata.get("fingerprint")
    if stored != expected_fingerprint:
        raise CompatibilityError(
            f"{path}: archive fingerprint {stored} does not match "
            f"model fingerprint {expected_fingerprint}"
        )

    indices = set()
    for name in tensors:
        m = _NAME.match(name)
        if not m:
            raise FormatError(f"{path}: unexpected tensor name {name!r}")
        indices.add(int(m.group(1)))
    if not indices:
        raise FormatError(f"{path}: archive holds no KV tensors")
    n_layers = max(indices) + 1
    if indices != set(range(n_layers)):
        raise FormatError(f"{path}: layer indices have gaps: {sorted(indices)}")

    layers = []
    for l in range(n_layers):
        try:
            keys = tensors[f"layer{l}.k"]
            values = tensors[f"layer{l}.v"]
        except KeyError as exc:
            raise FormatError(f"{path}: missing tensor {exc.args[0]!r}") from exc
        layers.append(LayerKV(keys=keys, values=values))
    step = int(metadata.get("T", 0))
    return KVState(layers=tuple(layers), step=step)
