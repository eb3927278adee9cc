"""Documents, entity-pair examples and the JSONL pair-dataset loader.

One JSON object per line::

    {"doc_id": "d1", "text": "...", "e1": [3, 4], "e2": [7, 8],
     "label": "b", "split": "train"}

Spans are token index ranges ``[start, end)`` over the whitespace tokens of
``text``.  A record may omit ``text`` when an earlier record already
defined the same ``doc_id``.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from pairtopk.errors import DataError, InvalidPairError, ParseError

SPLITS = ("train", "validation", "test")

# label abbreviations: a=After b=Before s=Simultaneous i=Includes ii=Is_included v=Vague e=Equal
LABEL_SETS: dict[str, tuple[str, ...]] = {
    "tddman": ("a", "b", "s", "i", "ii"),
    "tddauto": ("a", "b", "s", "i", "ii"),
    "matres": ("e", "a", "b", "v"),
    "tbd": ("a", "b", "s", "i", "ii", "v"),
}

_TOKEN_RE = re.compile(r"\S+")


@dataclass(frozen=True)
class Token:
    surface: str
    start: int
    end: int


@dataclass(frozen=True)
class Annotation:
    pos: str
    dep: str
    morph: str

    @property
    def morph_features(self) -> list[str]:
        return parse_morph(self.morph)


def parse_morph(morph: str) -> list[str]:
    """Split a morphology string into its ``key=value`` atoms; ``_`` means none."""
    if morph in ("", "_"):
        return []
    return [atom for atom in morph.split("|") if atom]


@dataclass
class Document:
    doc_id: str
    text: str
    tokens: list[Token]
    annotations: list[Annotation] | None = None

    @classmethod
    def from_text(cls, doc_id: str, text: str) -> "Document":
        tokens = [Token(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]
        return cls(doc_id, text, tokens)

    @property
    def words(self) -> list[str]:
        return [t.surface for t in self.tokens]

    def validate(self) -> None:
        prev_end = 0
        for i, tok in enumerate(self.tokens):
            if tok.start < prev_end or tok.end <= tok.start or tok.end > len(self.text):
                raise DataError(f"{self.doc_id}: token {i} span ({tok.start}, {tok.end}) is invalid")
            prev_end = tok.end
        if self.annotations is not None and len(self.annotations) != len(self.tokens):
            raise DataError(
                f"{self.doc_id}: {len(self.annotations)} annotations for {len(self.tokens)} tokens"
            )


@dataclass(frozen=True)
class PairExample:
    pair_id: str
    doc_id: str
    e1: tuple[int, int]
    e2: tuple[int, int]
    label: str
    split: str


@dataclass
class PairDataset:
    documents: dict[str, Document]
    examples: list[PairExample]
    label_set: tuple[str, ...]
    name: str = "dataset"
    meta: dict = field(default_factory=dict)

    def split(self, name: str) -> list[PairExample]:
        return [ex for ex in self.examples if ex.split == name]

    def split_counts(self) -> dict[str, int]:
        counts = Counter(ex.split for ex in self.examples)
        return {s: counts.get(s, 0) for s in SPLITS}

    def label_id(self, label: str) -> int:
        return self.label_set.index(label)


def resolve_label_set(label_set) -> tuple[str, ...] | None:
    if label_set is None:
        return None
    if isinstance(label_set, str):
        key = label_set.lower()
        if key in LABEL_SETS:
            return LABEL_SETS[key]
        return tuple(x.strip() for x in label_set.split(",") if x.strip())
    return tuple(label_set)


def check_spans(doc: Document, e1: tuple[int, int], e2: tuple[int, int], where: str = "") -> None:
    n = len(doc.tokens)
    for name, (s, e) in (("e1", e1), ("e2", e2)):
        if not 0 <= s < e <= n:
            raise DataError(f"{where}{name} span [{s}, {e}) out of bounds for {n} tokens in {doc.doc_id}")
    if e1[0] < e2[1] and e2[0] < e1[1]:
        raise InvalidPairError(f"{where}entity spans {list(e1)} and {list(e2)} overlap in {doc.doc_id}")


def _span(value, line: int, key: str) -> tuple[int, int]:
    if not (isinstance(value, list) and len(value) == 2 and all(isinstance(v, int) for v in value)):
        raise ParseError(f"{key} must be a [start, end] pair of integers", line)
    return value[0], value[1]


def load_pair_dataset(path, label_set=None, name: str | None = None) -> PairDataset:
    """Read and validate a pairs JSONL file.

    ``label_set`` is a known dataset name (``"tbd"``, ``"matres"``, ...), a
    comma-separated string, or a sequence.  Without one, the sorted set of
    labels found in the file is used.
    """
    path = Path(path)
    allowed = resolve_label_set(label_set)
    documents: dict[str, Document] = {}
    examples: list[PairExample] = []
    with path.open(encoding="utf-8") as fh:
        try:
            _read_pairs(fh, allowed, documents, examples)
        except DataError as exc:
            exc.args = (f"{path}: {exc.args[0]}", *exc.args[1:])
            raise
    labels = allowed if allowed is not None else tuple(sorted({ex.label for ex in examples}))
    return PairDataset(documents, examples, labels, name=name or path.stem)


def _read_pairs(fh, allowed, documents: dict[str, Document], examples: list[PairExample]) -> None:
    per_doc: Counter = Counter()
    for lineno, raw in enumerate(fh, start=1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON ({exc.msg})", lineno) from exc
        if not isinstance(rec, dict):
            raise ParseError("record is not a JSON object", lineno)
        for key in ("doc_id", "e1", "e2", "label", "split"):
            if key not in rec:
                raise ParseError(f"missing field {key!r}", lineno)
        doc_id = str(rec["doc_id"])
        if "text" in rec:
            doc = Document.from_text(doc_id, rec["text"])
            known = documents.get(doc_id)
            if known is not None and known.text != doc.text:
                raise DataError(f"line {lineno}: conflicting text for document {doc_id}")
            documents.setdefault(doc_id, doc)
        elif doc_id not in documents:
            raise DataError(f"line {lineno}: document {doc_id} referenced before its text")
        doc = documents[doc_id]
        e1, e2 = _span(rec["e1"], lineno, "e1"), _span(rec["e2"], lineno, "e2")
        check_spans(doc, e1, e2, where=f"line {lineno}: ")
        label, split = str(rec["label"]), str(rec["split"])
        if allowed is not None and label not in allowed:
            raise DataError(f"line {lineno}: label {label!r} not in label set {list(allowed)}")
        if split not in SPLITS:
            raise DataError(f"line {lineno}: split {split!r} not one of {list(SPLITS)}")
        pair_id = f"{doc_id}#{per_doc[doc_id]}"
        per_doc[doc_id] += 1
        examples.append(PairExample(pair_id, doc_id, e1, e2, label, split))


def write_pair_dataset(dataset: PairDataset, path) -> None:
    seen: set[str] = set()
    with Path(path).open("w", encoding="utf-8") as fh:
        for ex in dataset.examples:
            rec = {"doc_id": ex.doc_id}
            if ex.doc_id not in seen:
                rec["text"] = dataset.documents[ex.doc_id].text
                seen.add(ex.doc_id)
            rec.update(e1=list(ex.e1), e2=list(ex.e2), label=ex.label, split=ex.split)
            fh.write(json.dumps(rec) + "\n")
