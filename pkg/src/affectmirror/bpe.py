"""Byte-level BPE tokenizer in the standard GPT-2 asset layout: a JSON
vocabulary map plus a ranked merge list. Text is pre-split with the usual
contraction/letter/number/punctuation pattern, each piece is mapped through
the byte encoder, and merges apply in rank order.
"""

from __future__ import annotations

import json
from functools import lru_cache

import regex

from .errors import InconsistentVocab, ParseError, UnknownToken

_SPLIT = regex.compile(
    r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"""
)

END_OF_TEXT = "<|endoftext|>"


@lru_cache(maxsize=1)
def byte_encoder() -> dict[int, str]:
    """The reversible byte-to-printable-character map used by byte-level BPE."""
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
    return dict(zip(bs, (chr(c) for c in cs)))


class Tokenizer:
    def __init__(self, vocab: dict[str, int], merges: list[tuple[str, str]]):
        self.vocab = vocab
        self.decoder = {i: t for t, i in vocab.items()}
        self.ranks = {pair: rank for rank, pair in enumerate(merges)}
        self.byte_enc = byte_encoder()
        self.byte_dec = {c: b for b, c in self.byte_enc.items()}
        self._cache: dict[str, tuple[str, ...]] = {}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def eot_id(self) -> int | None:
        return self.vocab.get(END_OF_TEXT)

    def _bpe(self, token: str) -> tuple[str, ...]:
        cached = self._cache.get(token)
        if cached is not None:
            return cached
        word = tuple(token)
        while len(word) > 1:
            pairs = {(word[i], word[i + 1]) for i in range(len(word) - 1)}
            best = min(pairs, key=lambda p: self.ranks.get(p, 1 << 60))
            if best not in self.ranks:
                break
            first, second = best
            merged = []
            i = 0
            while i < len(word):
                if i < len(word) - 1 and word[i] == first and word[i + 1] == second:
                    merged.append(first + second)
                    i += 2
                else:
                    merged.append(word[i])
                    i += 1
            word = tuple(merged)
        self._cache[token] = word
        return word

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for piece in _SPLIT.findall(text):
            token = "".join(self.byte_enc[b] for b in piece.encode("utf-8"))
            for part in self._bpe(token):
                ids.append(self.vocab[part])
        return ids

    def decode(self, ids: list[int]) -> str:
        chunks = []
        for i in ids:
            token = self.decoder.get(i)
            if token is None:
                raise UnknownToken(f"token id {i} outside vocabulary of {self.vocab_size}")
            chunks.append(token)
        text = "".join(chunks)
        data = bytes(self.byte_dec[c] for c in text if c in self.byte_dec)
        return data.decode("utf-8", errors="replace")


def load_tokenizer(vocab_bytes: bytes, merges_bytes: bytes) -> Tokenizer:
    try:
        vocab = json.loads(vocab_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"vocabulary is not a JSON map: {e}") from None
    if not isinstance(vocab, dict) or not all(
        isinstance(k, str) and isinstance(v, int) for k, v in vocab.items()
    ):
        raise ParseError("vocabulary must map token strings to integer ids")
    if not vocab:
        raise InconsistentVocab("empty vocabulary")
    if set(vocab.values()) != set(range(len(vocab))):
        raise InconsistentVocab("token ids are not dense in [0, V)")

    merges: list[tuple[str, str]] = []
    for lineno, raw in enumerate(merges_bytes.decode("utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"merge line {lineno}: expected two tokens, got {line!r}")
        merges.append((parts[0], parts[1]))

    mergeable = {a + b for a, b in merges}
    for a, b in merges:
        if a + b not in vocab:
            raise InconsistentVocab(f"merge result {a + b!r} missing from vocabulary")
    for token in vocab:
        if len(token) > 1 and token not in mergeable and not (
            token.startswith("<|") and token.endswith("|>")
        ):
            raise InconsistentVocab(
                f"multi-character token {token!r} is not produced by any merge"
            )
    return Tokenizer(vocab, merges)


def tiny_tokenizer() -> Tokenizer:
    """The in-repo fixture: a pure byte vocabulary (V = 256), no merges."""
    enc = byte_encoder()
    vocab = {enc[b]: b for b in range(256)}
    return Tokenizer(vocab, [])
