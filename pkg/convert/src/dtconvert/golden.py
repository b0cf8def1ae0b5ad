"""Export golden reference records: per-prompt logits and the hidden
state after the first block, straight from the source model."""
import base64
import json
import os

import numpy as np

from .errors import ConversionError
from .convert import load_checkpoint


def load_tokenizer(source: str):
    """Byte-level BPE over the checkpoint's vocab/merges files."""
    from tokenizers import ByteLevelBPETokenizer

    vocab_path = os.path.join(source, "vocab.json")
    merges_path = os.path.join(source, "merges.txt")
    try:
        return ByteLevelBPETokenizer.from_file(vocab_path, merges_path)
    except Exception as exc:
        raise ConversionError(f"cannot load tokenizer from {source!r}: {exc}") from exc


def _b64(arr: np.ndarray) -> str:
    return base64.b64encode(
        np.ascontiguousarray(arr, dtype="<f4").tobytes()
    ).decode("ascii")


def export_reference(source: str, prompts, out_path: str) -> int:
    """One JSON line per prompt; returns the record count."""
    import torch

    model = load_checkpoint(source)
    tokenizer = load_tokenizer(source)
    count = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for prompt in prompts:
            ids = tokenizer.encode(prompt).ids
            if not ids:
                raise ConversionError(f"prompt encodes to no tokens: {prompt!r}")
            with torch.no_grad():
                out = model(
                    input_ids=torch.tensor([ids], dtype=torch.long),
                    output_hidden_states=True,
                )
            logits = out.logits[0].float().numpy()
            h0 = out.hidden_states[1][0].float().numpy()
            if not np.isfinite(logits).all():
                raise ConversionError(f"non-finite logits for prompt {prompt!r}")
            record = {
                "prompt": prompt,
                "token_ids": list(map(int, ids)),
                "n_tokens": len(ids),
                "vocab_size": int(logits.shape[1]),
                "d_model": int(h0.shape[1]),
                "logits_b64": _b64(logits),
                "h0_b64": _b64(h0),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            count += 1
    return count
