"""Model weight archives (DTWT) and model fingerprinting.

The archive shares the container layout with the KV format; tensor names
map 1:1 onto ModelWeights fields ("token_embedding", "layer3.w_q", ...).
The metadata block carries the config and, optionally, the tokenizer's
vocab/merges tables so a single file is a complete, runnable model.

The fingerprint is a 64-bit value, rendered as 16 hex digits: a hash of the
canonical config JSON XORed with a checksum over all weight bytes in sorted
name order. KV archives store it; the loader enforces it.
"""

from __future__ import annotations

import hashlib
import json
from typing import Mapping, Optional

import numpy as np

from .container import read_container, write_container
from .errors import FormatError
from .model import LayerWeights, ModelConfig, ModelWeights

MAGIC = b"DTWT0001"

_LAYER_FIELDS = (
    "w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o",
    "ln1_g", "ln1_b", "ln2_g", "ln2_b",
    "ffn_w_in", "ffn_b_in", "ffn_w_out", "ffn_b_out",
)
_CONFIG_FIELDS = (
    "n_layers", "n_heads", "d_model", "vocab_size",
    "max_positions", "ffn_hidden", "ln_eps",
)


def weights_to_tensors(weights: ModelWeights) -> dict[str, np.ndarray]:
    tensors = {
        "token_embedding": weights.token_embedding,
        "position_embedding": weights.position_embedding,
        "lnf_g": weights.lnf_g,
        "lnf_b": weights.lnf_b,
    }
    if weights.unembedding is not None:
        tensors["unembedding"] = weights.unembedding
    for l, lw in enumerate(weights.layers):
        for field in _LAYER_FIELDS:
            tensors[f"layer{l}.{field}"] = getattr(lw, field)
    return tensors


def config_to_meta(config: ModelConfig) -> dict:
    return {name: getattr(config, name) for name in _CONFIG_FIELDS}


def config_from_meta(meta: Mapping) -> ModelConfig:
    try:
        return ModelConfig(**{name: meta[name] for name in _CONFIG_FIELDS})
    except KeyError as exc:
        raise FormatError(f"config metadata missing {exc.args[0]!r}") from exc


def fingerprint_parts(config_meta: Mapping, tensors: Mapping[str, np.ndarray]) -> str:
    """16 hex digits: u64(config hash) XOR u64(weight checksum)."""
    canon = json.dumps(dict(config_meta), sort_keys=True, separators=(",", ":"))
    cfg = int.from_bytes(
        hashlib.sha256(canon.encode("utf-8")).digest()[:8], "little"
    )
    chk = hashlib.sha256()
    for name in sorted(tensors):
        chk.update(
            np.ascontiguousarray(tensors[name], dtype=np.dtype("<f4")).tobytes()
        )
    wgt = int.from_bytes(chk.digest()[:8], "little")
    return format(cfg ^ wgt, "016x")


def model_fingerprint(weights: ModelWeights) -> str:
    return fingerprint_parts(
        config_to_meta(weights.config), weights_to_tensors(weights)
    )


def save_model(
    weights: ModelWeights,
    path: str,
    tokenizer_tables: Optional[Mapping] = None,
) -> None:
    metadata = {"config": config_to_meta(weights.config)}
    if tokenizer_tables is not None:
        metadata["tokenizer"] = dict(tokenizer_tables)
    write_container(path, MAGIC, weights_to_tensors(weights), metadata)


def load_model(path: str) -> ModelWeights:
    """Load a DTWT archive. The tensor name set must match the schema
    exactly; a tokenizer is attached when the metadata carries its tables."""
    tensors, metadata = read_container(path, MAGIC)
    config = config_from_meta(metadata.get("config", {}))

    expected = {"token_embedding", "position_embedding", "lnf_g", "lnf_b"}
    for l in range(config.n_layers):
        expected.update(f"layer{l}.{field}" for field in _LAYER_FIELDS)
    optional = {"unembedding"}
    names = set(tensors)
    missing = expected - names
    extra = names - expected - optional
    if missing or extra:
        raise FormatError(
            f"{path}: tensor names do not match the weight schema "
            f"(missing {sorted(missing)}, unexpected {sorted(extra)})"
        )

    layers = tuple(
        LayerWeights(**{f: tensors[f"layer{l}.{f}"] for f in _LAYER_FIELDS})
        for l in range(config.n_layers)
    )
    weights = ModelWeights(
        config=config,
        token_embedding=tensors["token_embedding"],
        position_embedding=tensors["position_embedding"],
        layers=layers,
        lnf_g=tensors["lnf_g"],
        lnf_b=tensors["lnf_b"],
        unembedding=tensors.get("unembedding"),
    )
    tables = metadata.get("tokenizer")
    if tables is not None:
        from .tokenizer import Tokenizer

        weights.tokenizer = Tokenizer.from_tables(tables)
    return weights
