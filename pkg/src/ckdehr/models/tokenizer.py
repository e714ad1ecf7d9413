"""Word-level tokenizer with a fitted vocabulary."""

from __future__ import annotations

import os
import re
from collections import Counter
from typing import Iterable, Sequence

import numpy as np

PAD, UNK, CLS = "[PAD]", "[UNK]", "[CLS]"
SPECIALS = (PAD, UNK, CLS)

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:\.[0-9]+)?|[^\sa-z0-9]")


def split_words(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[:3]) != SPECIALS:
            raise ValueError(f"vocabulary must start with {SPECIALS}")
        self.itos = list(tokens)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    pad_id = 0
    unk_id = 1
    cls_id = 2

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, tok) -> bool:
        return tok in self.stoi

    def encode_words(self, words: Iterable[str]) -> list[int]:
        return [self.stoi.get(w, self.unk_id) for w in words]

    def label_token_ids(self, names: Sequence[str]) -> list[list[int]]:
        """Ids of the alphanumeric word tokens of each label name."""
        out = []
        for name in names:
            ids = sorted({self.stoi[w] for w in split_words(name) if w[0].isalnum() and w in self.stoi})
            out.append(ids)
        return out

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for t in self.itos:
                fh.write(t + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh])


def fit_vocabulary(corpus: Iterable[str], min_freq: int = 1, extra: Iterable[str] = ()) -> Vocabulary:
    """Build a vocabulary from ``corpus``; ``extra`` texts are always covered.

    Token order after the specials is descending frequency, ties by token.
    """
    counts = Counter()
    for text in corpus:
        counts.update(split_words(text))
    kept = {t for t, c in counts.items() if c >= min_freq}
    for text in extra:
        for w in split_words(text):
            if w not in kept:
                kept.add(w)
                counts.setdefault(w, 0)
    ordered = sorted(kept - set(SPECIALS), key=lambda t: (-counts[t], t))
    return Vocabulary(list(SPECIALS) + ordered)


def tokenize(text: str, vocab: Vocabulary, max_seq_len: int) -> tuple[list[int], list[int]]:
    """``[CLS] + word ids`` truncated to ``max_seq_len`` and right-padded."""
    if max_seq_len < 1:
        raise ValueError("max_seq_len must be at least 1")
    ids = [vocab.cls_id] + vocab.encode_words(split_words(text))
    ids = ids[:max_seq_len]
    n = len(ids)
    return ids + [vocab.pad_id] * (max_seq_len - n), [1] * n + [0] * (max_seq_len - n)


def encode_batch(texts: Sequence[str], vocab: Vocabulary, max_seq_len: int) -> tuple[np.ndarray, np.ndarray]:
    ids = np.zeros((len(texts), max_seq_len), dtype=np.int64)
    mask = np.zeros((len(texts), max_seq_len), dtype=bool)
    for i, text in enumerate(texts):
        row, m = tokenize(text, vocab, max_seq_len)
        ids[i] = row
        mask[i] = m
    return ids, mask
