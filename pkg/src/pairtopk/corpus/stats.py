"""Edge-to-edge entity distances per split."""

from __future__ import annotations

import csv
from pathlib import Path

from pairtopk.corpus.documents import SPLITS, Document, PairDataset, PairExample

STATS_HEADER = ["dataset", "split", "avg_char", "avg_token", "min_token", "max_token"]


def pair_distance(doc: Document, pair: PairExample) -> tuple[int, int]:
    """(character, token) distance between the facing edges of the two spans.

    Adjacent tokens are one token apart.
    """
    left, right = sorted([pair.e1, pair.e2])
    token = right[0] - left[1] + 1
    char = doc.tokens[right[0]].start - doc.tokens[left[1] - 1].end
    return char, token


def distance_statistics(dataset: PairDataset) -> dict[str, dict]:
    """Summary per split plus ``all``; empty splits are omitted."""
    groups = {s: dataset.split(s) for s in SPLITS}
    groups["all"] = list(dataset.examples)
    out: dict[str, dict] = {}
    for split, examples in groups.items():
        if not examples:
            continue
        dists = [pair_distance(dataset.documents[ex.doc_id], ex) for ex in examples]
        chars = [c for c, _ in dists]
        tokens = [t for _, t in dists]
        out[split] = {
            "avg_char": sum(chars) / len(chars),
            "avg_token": sum(tokens) / len(tokens),
            "min_token": min(tokens),
            "max_token": max(tokens),
            "count": len(tokens),
        }
    return out


def write_stats_csv(dataset: PairDataset, path) -> None:
    stats = distance_statistics(dataset)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_HEADER)
        for split, row in stats.items():
            w.writerow([dataset.name, split, round(row["avg_char"], 6), round(row["avg_token"], 6),
                        row["min_token"], row["max_token"]])
