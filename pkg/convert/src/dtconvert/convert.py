"""Map a GPT-2-family checkpoint onto the engine's model archive schema.

The attention projection lives in one fused `c_attn` matrix of shape
(d_model, 3*d_model) in the source (Conv1D orientation: y = x @ W + b);
the archive wants separate w_q/w_k/w_v in the same x @ W orientation, so
the split is a plain column slice, no transpose.
"""
import json
import os

import numpy as np

from .container import MODEL_MAGIC, write_archive
from .errors import ConversionError


def load_checkpoint(source: str):
    """Instantiate the source model in eval mode (local path or model id)."""
    from transformers import GPT2LMHeadModel
    from transformers.utils import logging as hf_logging

    hf_logging.set_verbosity_error()
    hf_logging.disable_progress_bar()
    try:
        model = GPT2LMHeadModel.from_pretrained(source)
    except Exception as exc:
        raise ConversionError(f"cannot load checkpoint {source!r}: {exc}") from exc
    model.eval()
    return model


def config_meta(model) -> dict:
    cfg = model.config
    return {
        "n_layers": int(cfg.n_layer),
        "n_heads": int(cfg.n_head),
        "d_model": int(cfg.n_embd),
        "vocab_size": int(cfg.vocab_size),
        "max_positions": int(cfg.n_positions),
        "ffn_hidden": int(cfg.n_inner) if cfg.n_inner else 4 * int(cfg.n_embd),
        "ln_eps": float(cfg.layer_norm_epsilon),
    }


def weight_tensors(model) -> dict:
    """State dict -> archive tensor names, with the fused QKV split."""
    state = model.state_dict()

    def take(key: str) -> np.ndarray:
        try:
            value = state[key]
        except KeyError:
            raise ConversionError(f"source checkpoint missing tensor {key}") from None
        return value.detach().cpu().float().numpy()

    d = int(model.config.n_embd)
    out = {
        "token_embedding": take("transformer.wte.weight"),
        "position_embedding": take("transformer.wpe.weight"),
        "lnf_g": take("transformer.ln_f.weight"),
        "lnf_b": take("transformer.ln_f.bias"),
    }
    for l in range(int(model.config.n_layer)):
        src = f"transformer.h.{l}."
        dst = f"layer{l}."
        qkv_w = take(src + "attn.c_attn.weight")
        qkv_b = take(src + "attn.c_attn.bias")
        if qkv_w.shape != (d, 3 * d):
            raise ConversionError(
                f"{src}attn.c_attn.weight has shape {qkv_w.shape}, "
                f"expected {(d, 3 * d)}"
            )
        out[dst + "w_q"] = qkv_w[:, :d]
        out[dst + "w_k"] = qkv_w[:, d:2 * d]
        out[dst + "w_v"] = qkv_w[:, 2 * d:]
        out[dst + "b_q"] = qkv_b[:d]
        out[dst + "b_k"] = qkv_b[d:2 * d]
        out[dst + "b_v"] = qkv_b[2 * d:]
        out[dst + "w_o"] = take(src + "attn.c_proj.weight")
        out[dst + "b_o"] = take(src + "attn.c_proj.bias")
        out[dst + "ln1_g"] = take(src + "ln_1.weight")
        out[dst + "ln1_b"] = take(src + "ln_1.bias")
        out[dst + "ln2_g"] = take(src + "ln_2.weight")
        out[dst + "ln2_b"] = take(src + "ln_2.bias")
        out[dst + "ffn_w_in"] = take(src + "mlp.c_fc.weight")
        out[dst + "ffn_b_in"] = take(src + "mlp.c_fc.bias")
        out[dst + "ffn_w_out"] = take(src + "mlp.c_proj.weight")
        out[dst + "ffn_b_out"] = take(src + "mlp.c_proj.bias")
    if not model.config.tie_word_embeddings:
        out["unembedding"] = take("lm_head.weight")
    return out


def read_tokenizer_tables(source: str):
    """vocab.json + merges.txt from a checkpoint directory, or None."""
    vocab_path = os.path.join(source, "vocab.json")
    merges_path = os.path.join(source, "merges.txt")
    if not (os.path.isfile(vocab_path) and os.path.isfile(merges_path)):
        return None
    with open(vocab_path, "r", encoding="utf-8") as fh:
        vocab = json.load(fh)
    merges = []
    with open(merges_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            merges.append(line)
    return {"vocab": vocab, "merges": merges}


def convert_checkpoint(source: str, out_path: str) -> dict:
    """Write the archive; returns a summary (config plus tensor count)."""
    model = load_checkpoint(source)
    tensors = weight_tensors(model)
    metadata = {"config": config_meta(model)}
    tables = read_tokenizer_tables(source) if os.path.isdir(source) else None
    if tables is not None:
        metadata["tokenizer"] = tables
    write_archive(out_path, MODEL_MAGIC, tensors, metadata)
    return {"config": metadata["config"], "tensors": len(tensors),
            "tokenizer": tables is not None}
