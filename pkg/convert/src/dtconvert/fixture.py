"""Build a fully local, seeded checkpoint plus golden records.

The public checkpoint hosts are not reachable from every build
environment; this constructs a small randomly initialized model of the
same family, with byte-level tokenizer tables, so conversion and the
cross-implementation comparison can run end to end offline.
"""
import json
import os

from .convert import convert_checkpoint
from .golden import export_reference

PROMPTS = (
    "The quick brown fox jumps over the lazy dog.",
    "Hello world!",
    "In the beginning there was a small idea.",
    "Numbers like 12, 345 and 6789 appear here.",
    "Punctuation, quotes 'single' and spacing   matter.",
    "A sentence\nwith a newline inside it.",
    "Short.",
    "The committee agreed to postpone the decision.",
    "Rain fell steadily through the long afternoon.",
    "She plugged in the kettle and waited.",
    "Every archive records its own shapes.",
    "Gradient norms settle after a few steps.",
    "The museum opens at nine on weekdays.",
    "He read the letter twice before replying.",
    "Static electricity crackled across the blanket.",
    "Two trains left the station at noon.",
    "The recipe calls for three eggs and butter.",
    "Low tide exposed the old wooden pilings.",
    "Attention weights sum to one per row.",
    "The final whistle ended the match.",
    "A prefix can stand in for its context.",
    "Don't count tokens twice.",
    "Tables of merges drive the tokenizer.",
    "Everything fits in sixty-four dimensions here.",
)


def _byte_unicode_table():
    # the standard printable mapping for byte-level BPE vocabularies
    ranges = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(0xA1, 0xAC + 1))
        + list(range(0xAE, 0xFF + 1))
    )
    chars = list(ranges)
    extra = 0
    for b in range(256):
        if b not in ranges:
            ranges.append(b)
            chars.append(256 + extra)
            extra += 1
    return {b: chr(c) for b, c in zip(ranges, chars)}


def write_tokenizer_files(directory: str) -> int:
    """Byte-level vocab plus a few merges; returns the vocab size."""
    table = _byte_unicode_table()
    pieces = [table[b] for b in range(256)]
    merges = [
        (table[ord("t")], table[ord("h")]),
        (table[ord(" ")], table[ord("t")]),
        (table[ord("i")], table[ord("n")]),
        (table[ord("e")], table[ord("r")]),
        (table[ord(" ")] + table[ord("t")], table[ord("h")]),
        (table[ord("o")], table[ord("n")]),
    ]
    vocab = {p: i for i, p in enumerate(pieces)}
    for a, b in merges:
        vocab[a + b] = len(vocab)

    with open(os.path.join(directory, "vocab.json"), "w", encoding="utf-8") as fh:
        json.dump(vocab, fh, ensure_ascii=False)
    with open(os.path.join(directory, "merges.txt"), "w", encoding="utf-8") as fh:
        fh.write("#version: 0.2\n")
        for a, b in merges:
            fh.write(f"{a} {b}\n")
    return len(vocab)


def build_checkpoint(directory: str, n_layer: int = 3, n_head: int = 4,
                     n_embd: int = 64, seed: int = 0) -> None:
    """Seeded random model of the target family, saved with its tables."""
    import torch
    from transformers import GPT2Config, GPT2LMHeadModel
    from transformers.utils import logging as hf_logging

    hf_logging.set_verbosity_error()
    hf_logging.disable_progress_bar()
    os.makedirs(directory, exist_ok=True)
    vocab_size = write_tokenizer_files(directory)
    config = GPT2Config(
        vocab_size=vocab_size,
        n_positions=256,
        n_embd=n_embd,
        n_layer=n_layer,
        n_head=n_head,
        activation_function="gelu_new",
        bos_token_id=0,
        eos_token_id=0,
    )
    torch.manual_seed(seed)
    model = GPT2LMHeadModel(config).eval()
    model.save_pretrained(directory)


def build_fixture(out_dir: str, seed: int = 0) -> dict:
    """Checkpoint -> archive + golden records under out_dir."""
    checkpoint = os.path.join(out_dir, "checkpoint")
    os.makedirs(out_dir, exist_ok=True)
    build_checkpoint(checkpoint, seed=seed)
    summary = convert_checkpoint(checkpoint, os.path.join(out_dir, "model.dtwt"))
    count = export_reference(
        checkpoint, PROMPTS, os.path.join(out_dir, "golden.jsonl")
    )
    return {"checkpoint": checkpoint, "records": count, **summary}
