"""Deterministic subword chunking and subword-to-word alignment.

Words are cut greedily into chunks of at most four characters.  Entity
markers are atomic.  The vocabulary maps chunks to ids with fixed slots for
padding, out-of-vocabulary chunks and the four markers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from pairtopk.errors import AlignmentError, CompatibilityError, DataError

CHUNK = 4
PAD, OOV = "<pad>", "<oov>"
MARKERS = ("[E1]", "[/E1]", "[E2]", "[/E2]")
PAD_ID, OOV_ID = 0, 1


def chunk_word(word: str) -> list[str]:
    if not word:
        raise DataError("empty word cannot be tokenized")
    if word in MARKERS:
        return [word]
    return [word[i:i + CHUNK] for i in range(0, len(word), CHUNK)]


@dataclass
class AlignmentMask:
    subword_to_word: np.ndarray  # int per subword, -1 for padding
    word_count: int

    def validate(self) -> None:
        idx = self.subword_to_word[self.subword_to_word >= 0]
        if idx.size and np.any(np.diff(idx) < 0):
            raise AlignmentError("word indices must be non-decreasing over subwords")
        if set(idx.tolist()) != set(range(self.word_count)):
            raise AlignmentError("alignment does not cover every word exactly")

    def word_matrix(self) -> np.ndarray:
        """Boolean [word_count, n_subwords] membership matrix."""
        return self.subword_to_word[None, :] == np.arange(self.word_count)[:, None]


def split_subwords(words: Sequence[str]) -> tuple[list[str], np.ndarray]:
    """Chunk every word; return the chunks and each chunk's source word index."""
    if not words:
        raise DataError("cannot tokenize an empty word list")
    chunks: list[str] = []
    owner: list[int] = []
    for i, w in enumerate(words):
        for c in chunk_word(w):
            chunks.append(c)
            owner.append(i)
    return chunks, np.asarray(owner, dtype=np.int64)


class Vocabulary:
    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = [PAD, OOV, *MARKERS]
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, OOV_ID)

    @property
    def fingerprint(self) -> str:
        return hashlib.sha1("\n".join(self.itos).encode()).hexdigest()[:16]

    @classmethod
    def build(cls, word_lists: Iterable[Sequence[str]]) -> "Vocabulary":
        vocab = cls()
        for words in word_lists:
            for w in words:
                for c in chunk_word(w):
                    vocab.add(c)
        return vocab

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, items: Sequence[str]) -> "Vocabulary":
        if list(items[: 2 + len(MARKERS)]) != [PAD, OOV, *MARKERS]:
            raise CompatibilityError("vocabulary does not start with the reserved tokens")
        vocab = cls()
        for t in items[2 + len(MARKERS):]:
            vocab.add(t)
        return vocab


def tokenize_and_align(words: Sequence[str], vocab: Vocabulary) -> tuple[np.ndarray, AlignmentMask]:
    chunks, owner = split_subwords(words)
    ids = np.asarray([vocab.lookup(c) for c in chunks], dtype=np.int64)
    return ids, AlignmentMask(owner, len(words))
