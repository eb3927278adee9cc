"""Context-window construction with entity markers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pairtopk.corpus.documents import Document, PairExample, check_spans
from pairtopk.corpus.tokenize import AlignmentMask, Vocabulary, tokenize_and_align
from pairtopk.errors import WindowTooSmallError

DEFAULT_WINDOW = 64


@dataclass
class Instance:
    instance_id: str
    doc_id: str
    words: list[str]
    word_doc_index: np.ndarray  # document token index per window word, -1 for markers
    subword_ids: np.ndarray
    alignment: AlignmentMask
    e1_mask: np.ndarray
    e2_mask: np.ndarray
    label: int
    vocab_fingerprint: str = ""

    @property
    def word_count(self) -> int:
        return len(self.words)

    @property
    def attention_mask(self) -> np.ndarray:
        return np.ones(len(self.subword_ids), dtype=bool)

    @property
    def window_offsets(self) -> list[int]:
        return self.word_doc_index.tolist()


def _centered(lo: int, hi: int, size: int, n: int) -> range:
    """Range of ``size`` positions centered on ``[lo, hi)``, clamped to ``[0, n)``."""
    size = min(size, n)
    start = math.floor((lo + hi - size) / 2)
    start = max(0, min(start, n - size))
    return range(start, start + size)


def merge_subwindows(windows) -> list[int]:
    """Union of index ranges in document order, each index kept once."""
    return sorted(set().union(*map(set, windows)))


def window_indices(n_tokens: int, e1: tuple[int, int], e2: tuple[int, int], ws: int) -> list[int]:
    """Document token indices covered by the context window of a pair."""
    longest = max(e1[1] - e1[0], e2[1] - e2[0])
    if longest + 2 > ws:
        raise WindowTooSmallError(f"window of {ws} words cannot hold an entity of {longest} words plus markers")
    lo, hi = min(e1[0], e2[0]), max(e1[1], e2[1])
    if hi - lo <= ws:
        return list(_centered(lo, hi, ws, n_tokens))
    half = math.ceil(ws / 2)
    return merge_subwindows(
        _centered(s, e, max(half, e - s), n_tokens) for s, e in (e1, e2)
    )


def marked_words(doc: Document, indices: list[int], e1: tuple[int, int],
                 e2: tuple[int, int]) -> tuple[list[str], list[int], np.ndarray, np.ndarray]:
    words: list[str] = []
    origin: list[int] = []
    in1: list[bool] = []
    in2: list[bool] = []

    def put(word: str, idx: int, a: bool = False, b: bool = False):
        words.append(word)
        origin.append(idx)
        in1.append(a)
        in2.append(b)

    for idx in indices:
        if idx == e1[0]:
            put("[E1]", -1)
        if idx == e2[0]:
            put("[E2]", -1)
        put(doc.tokens[idx].surface, idx, e1[0] <= idx < e1[1], e2[0] <= idx < e2[1])
        if idx == e1[1] - 1:
            put("[/E1]", -1)
        if idx == e2[1] - 1:
            put("[/E2]", -1)
    return words, origin, np.asarray(in1, dtype=bool), np.asarray(in2, dtype=bool)


def build_context_window(doc: Document, pair: PairExample, ws: int, vocab: Vocabulary,
                         label_id: int = -1) -> Instance:
    """Window the pair's document, insert markers, tokenize and align."""
    check_spans(doc, pair.e1, pair.e2)
    indices = window_indices(len(doc.tokens), pair.e1, pair.e2, ws)
    words, origin, e1_mask, e2_mask = marked_words(doc, indices, pair.e1, pair.e2)
    ids, alignment = tokenize_and_align(words, vocab)
    return Instance(
        instance_id=pair.pair_id,
        doc_id=doc.doc_id,
        words=words,
        word_doc_index=np.asarray(origin, dtype=np.int64),
        subword_ids=ids,
        alignment=alignment,
        e1_mask=e1_mask,
        e2_mask=e2_mask,
        label=label_id,
        vocab_fingerprint=vocab.fingerprint,
    )


def window_words_for(doc: Document, pair: PairExample, ws: int) -> list[str]:
    indices = window_indices(len(doc.tokens), pair.e1, pair.e2, ws)
    return marked_words(doc, indices, pair.e1, pair.e2)[0]


def make_vocabulary(dataset, ws: int = DEFAULT_WINDOW) -> Vocabulary:
    """Vocabulary over the marked training windows of ``dataset``."""
    return Vocabulary.build(
        window_words_for(dataset.documents[ex.doc_id], ex, ws) for ex in dataset.split("train")
    )


def make_instances(dataset, split: str, ws: int, vocab: Vocabulary) -> list[Instance]:
    return [
        build_context_window(dataset.documents[ex.doc_id], ex, ws, vocab, dataset.label_id(ex.label))
        for ex in dataset.split(split)
    ]
