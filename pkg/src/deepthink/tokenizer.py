"""Byte-level BPE tokenizer of the GPT-2 family.

Text is split into pre-tokens by a scanner that mirrors the reference
pattern ('s|'t|'re|'ve|'m|'ll|'d, optional-space letter runs, number runs,
punctuation runs, whitespace-run-keeping-one-before-nonspace, whitespace),
each pre-token's UTF-8 bytes are mapped through the reversible byte-to-
unicode table, and merges apply by rank.

encode_with_spans also reports, per output token, the half-open byte range
it covers in the UTF-8 encoding of the input. Candidate scoring uses those
spans to find which tokens belong to the answer region of a prompt.
"""

from __future__ import annotations

import unicodedata
from functools import lru_cache
from typing import Iterable, Mapping

from .errors import InputError

_CONTRACTIONS = ("'s", "'t", "'re", "'ve", "'m", "'ll", "'d")


@lru_cache(maxsize=1)
def bytes_to_unicode() -> dict[int, str]:
    """Reversible byte -> printable-unicode map (the reference table)."""
    bs = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("\xa1"), ord("\xac") + 1))
        + list(range(ord("\xae"), ord("\xff") + 1))
    )
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, map(chr, cs)))


def _is_letter(ch: str) -> bool:
    return unicodedata.category(ch).startswith("L")


def _is_number(ch: str) -> bool:
    return unicodedata.category(ch).startswith("N")


def _is_space(ch: str) -> bool:
    return ch.isspace()


def pretokenize(text: str) -> list[str]:
    """Split text into pre-tokens, concatenation-preserving."""
    out = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "'":
            for suf in _CONTRACTIONS:
                if text.startswith(suf, i):
                    out.append(suf)
                    i += len(suf)
                    break
            else:
                # lone apostrophe falls through to the punctuation run
                j = i + 1
                while j < n and not (
                    _is_space(text[j]) or _is_letter(text[j]) or _is_number(text[j])
                ):
                    j += 1
                out.append(text[i:j])
                i = j
            continue

        start = i
        if ch == " " and i + 1 < n and not _is_space(text[i + 1]):
            i += 1
            ch = text[i]

        if _is_letter(ch):
            j = i
            while j < n and _is_letter(text[j]):
                j += 1
        elif _is_number(ch):
            j = i
            while j < n and _is_number(text[j]):
                j += 1
        elif _is_space(ch):
            j = i
            while j < n and _is_space(text[j]):
                j += 1
            # keep one space in front of a following pre-token
            if j < n and j - i > 1:
                j -= 1
        else:
            j = i + 1
            while j < n and not (
                _is_space(text[j]) or _is_letter(text[j]) or _is_number(text[j])
            ):
                j += 1
        out.append(text[start:j])
        i = j
    return out


class Tokenizer:
    def __init__(self, vocab: Mapping[str, int], merges: Iterable[tuple[str, str]]):
        self.vocab = dict(vocab)
        self.ids_to_piece = {v: k for k, v in self.vocab.items()}
        self.ranks = {pair: r for r, pair in enumerate(merges)}
        self.byte_encoder = bytes_to_unicode()
        self.byte_decoder = {c: b for b, c in self.byte_encoder.items()}
        self._bpe_cache: dict[str, tuple[str, ...]] = {}

    @staticmethod
    def from_tables(tables: Mapping) -> "Tokenizer":
        """Build from {"vocab": {piece: id}, "merges": ["a b", ...]}."""
        merges = []
        for line in tables["merges"]:
            if line.startswith("#") or not line.strip():
                continue
            a, b = line.split(" ")
            merges.append((a, b))
        return Tokenizer(tables["vocab"], merges)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def _bpe(self, piece: str) -> tuple[str, ...]:
        cached = self._bpe_cache.get(piece)
        if cached is not None:
            return cached
        word = tuple(piece)
        while len(word) > 1:
            pairs = {(word[k], word[k + 1]) for k in range(len(word) - 1)}
            best = min(pairs, key=lambda p: self.ranks.get(p, float("inf")))
            if best not in self.ranks:
                break
            first, second = best
            merged = []
            k = 0
            while k < len(word):
                if (
                    k < len(word) - 1
                    and word[k] == first
                    and word[k + 1] == second
                ):
                    merged.append(first + second)
                    k += 2
                else:
                    merged.append(word[k])
                    k += 1
            word = tuple(merged)
        self._bpe_cache[piece] = word
        return word

    def encode_with_spans(self, text: str):
        """Returns (ids, spans); spans[i] is the half-open byte range of
        token i in text.encode('utf-8')."""
        ids: list[int] = []
        spans: list[tuple[int, int]] = []
        offset = 0
        for pre in pretokenize(text):
            mapped = "".join(self.byte_encoder[b] for b in pre.encode("utf-8"))
            for token in self._bpe(mapped):
                token_id = self.vocab.get(token)
                if token_id is None:
                    raise InputError(f"token piece {token!r} not in vocabulary")
                ids.append(token_id)
                spans.append((offset, offset + len(token)))
                offset += len(token)
        return ids, spans

    def encode(self, text: str) -> list[int]:
        return self.encode_with_spans(text)[0]

    def decode(self, ids: Iterable[int]) -> str:
        pieces = []
        for i in ids:
            piece = self.ids_to_piece.get(int(i))
            if piece is None:
                raise InputError(f"unknown token id {i}")
            pieces.append(piece)
        data = bytes(self.byte_decoder[c] for c in "".join(pieces))
        return data.decode("utf-8", errors="replace")
