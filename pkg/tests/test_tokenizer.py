import pytest

from deepthink import InputError, Tokenizer, bytes_to_unicode, pretokenize

from conftest import byte_level_tokenizer

GPT2_PATTERN = (
    r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+|"""
    r""" ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"""
)

SAMPLES = [
    "hello world",
    "Hello, World!",
    "it's we're I'll you've he'd isn't I'm",
    "  leading and trailing  ",
    "a  b   c\t\td",
    "line one\nline two\n\nline four",
    "numbers 123 and 45.67 mixed a1b2",
    "price: $5,300.99 (reduced!)",
    "what?!?  ...",
    "don't 'quote' O'Neill ''s",
    "tabs\tand\nnewlines \n mixed\n",
    "café naïve über",
    "日本語のテスト",
    "emoji \U0001f600 test",
    "Review: great movie\nSentiment: positive",
    "",
    " ",
    "   ",
    "'",
    "'s",
    " 's",
    "a'",
]


class TestBytesToUnicode:
    def test_covers_all_bytes(self):
        table = bytes_to_unicode()
        assert sorted(table) == list(range(256))

    def test_reversible(self):
        table = bytes_to_unicode()
        assert len(set(table.values())) == 256

    def test_printable_ascii_fixed(self):
        table = bytes_to_unicode()
        assert table[ord("a")] == "a"
        assert table[ord(" ")] == "Ġ"


class TestPretokenize:
    def test_concatenation_preserving(self):
        for text in SAMPLES:
            assert "".join(pretokenize(text)) == text

    def test_basic_split(self):
        assert pretokenize("hello world") == ["hello", " world"]

    def test_contractions(self):
        assert pretokenize("it's") == ["it", "'s"]
        assert pretokenize("we're") == ["we", "'re"]
        assert pretokenize("I'll") == ["I", "'ll"]

    def test_space_keeping_backtrack(self):
        assert pretokenize("a  b") == ["a", " ", " b"]
        assert pretokenize("a   b") == ["a", "  ", " b"]
        assert pretokenize("a  ") == ["a", "  "]

    def test_numbers_and_punct(self):
        assert pretokenize("abc 123!") == ["abc", " 123", "!"]

    def test_matches_reference_pattern(self):
        regex = pytest.importorskip("regex")
        pat = regex.compile(GPT2_PATTERN)
        for text in SAMPLES:
            assert pretokenize(text) == pat.findall(text), repr(text)

    def test_matches_reference_pattern_fuzz(self):
        regex = pytest.importorskip("regex")
        import random

        pat = regex.compile(GPT2_PATTERN)
        alphabet = "ab N1.'é\n\t !?-日 "
        rng = random.Random(0)
        for _ in range(300):
            text = "".join(
                rng.choice(alphabet) for _ in range(rng.randrange(0, 30))
            )
            assert pretokenize(text) == pat.findall(text), repr(text)


class TestTokenizer:
    def test_byte_level_roundtrip(self):
        tok = byte_level_tokenizer()
        for text in SAMPLES:
            assert tok.decode(tok.encode(text)) == text

    def test_merges_apply_by_rank(self):
        tok = byte_level_tokenizer(merges=(("h", "e"), ("he", "l")))
        ids = tok.encode("hello")
        assert ids == [tok.vocab["hel"], ord("l"), ord("o")]

    def test_spans_partition_byte_length(self):
        tok = byte_level_tokenizer(merges=(("h", "e"), ("he", "l")))
        for text in SAMPLES:
            ids, spans = tok.encode_with_spans(text)
            total = len(text.encode("utf-8"))
            if not ids:
                assert total == 0
                continue
            assert spans[0][0] == 0
            assert spans[-1][1] == total
            for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
                assert e0 == s1
                assert s0 < e0

    def test_span_alignment_with_merge(self):
        tok = byte_level_tokenizer(merges=(("h", "e"), ("he", "l")))
        ids, spans = tok.encode_with_spans("hello")
        assert spans == [(0, 3), (3, 4), (4, 5)]

    def test_multibyte_spans(self):
        tok = byte_level_tokenizer()
        ids, spans = tok.encode_with_spans("café!")
        # e-acute is two UTF-8 bytes, so the word covers 5 bytes
        assert spans[-1] == (5, 6)

    def test_from_tables_skips_comment_lines(self):
        tables = {
            "vocab": dict(byte_level_tokenizer().vocab),
            "merges": ["#version: test", "h e"],
        }
        tables["vocab"]["he"] = len(tables["vocab"])
        tok = Tokenizer.from_tables(tables)
        assert tok.encode("he") == [tables["vocab"]["he"]]

    def test_unknown_piece_raises(self):
        tok = Tokenizer({"a": 0}, [])
        with pytest.raises(InputError):
            tok.encode("b")

    def test_unknown_id_raises(self):
        tok = byte_level_tokenizer()
        with pytest.raises(InputError):
            tok.decode([9999])

    def test_gpt2_style_word_with_space(self):
        merges = ((
            "Ġ", "w"), ("Ġw", "o"), ("Ġwo", "r"),
            ("Ġwor", "l"), ("Ġworl", "d"),
        )
        tok = byte_level_tokenizer(merges=merges)
        ids, spans = tok.encode_with_spans("hi world")
        assert tok.ids_to_piece[ids[-1]] == "Ġworld"
        assert spans[-1] == (2, 8)
