"""Tab-separated per-token linguistic annotations.

One token per line, documents separated by a blank line::

    doc_id  token_index  surface  pos  dep  morph

``morph`` holds ``key=value`` atoms joined by ``|``; ``_`` marks no features.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from pairtopk.corpus.documents import Annotation, Document
from pairtopk.errors import AlignmentError, ParseError


@dataclass(frozen=True)
class AnnotatedToken:
    doc_id: str
    index: int
    surface: str
    annotation: Annotation


def read_annotations(path) -> dict[str, list[AnnotatedToken]]:
    blocks: dict[str, list[AnnotatedToken]] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 6:
                raise ParseError(f"expected 6 tab-separated fields, got {len(cols)}", lineno)
            doc_id, idx, surface, pos, dep, morph = cols
            try:
                index = int(idx)
            except ValueError as exc:
                raise ParseError(f"token index {idx!r} is not an integer", lineno) from exc
            blocks.setdefault(doc_id, []).append(
                AnnotatedToken(doc_id, index, surface, Annotation(pos, dep, morph or "_"))
            )
    return blocks


def attach_annotations(documents: dict[str, Document], blocks: dict[str, list[AnnotatedToken]]) -> dict:
    """Attach parsed blocks to their documents; return coverage statistics."""
    for doc_id, rows in blocks.items():
        doc = documents.get(doc_id)
        if doc is None:
            raise AlignmentError(f"annotations for unknown document {doc_id}")
        for expected, row in enumerate(rows):
            if row.index != expected or row.index >= len(doc.tokens):
                raise AlignmentError(f"{doc_id}: annotation index {row.index} does not match token {expected}")
            if doc.tokens[row.index].surface != row.surface:
                raise AlignmentError(
                    f"{doc_id}: annotation index {row.index} surface {row.surface!r} "
                    f"!= token {doc.tokens[row.index].surface!r}"
                )
        if len(rows) != len(doc.tokens):
            raise AlignmentError(f"{doc_id}: {len(rows)} annotations for {len(doc.tokens)} tokens")
        doc.annotations = [r.annotation for r in rows]
    annotated = [d for d in documents.values() if d.annotations is not None]
    n_tokens = sum(len(d.tokens) for d in documents.values())
    return {
        "documents": len(documents),
        "annotated_documents": len(annotated),
        "token_coverage": (sum(len(d.tokens) for d in annotated) / n_tokens) if n_tokens else 0.0,
    }


def load_annotations(path, documents: dict[str, Document]) -> dict:
    return attach_annotations(documents, read_annotations(path))


def write_annotations(documents, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        first = True
        for doc in documents:
            if doc.annotations is None:
                continue
            if not first:
                fh.write("\n")
            first = False
            for i, (tok, ann) in enumerate(zip(doc.tokens, doc.annotations)):
                fh.write(f"{doc.doc_id}\t{i}\t{tok.surface}\t{ann.pos}\t{ann.dep}\t{ann.morph}\n")
