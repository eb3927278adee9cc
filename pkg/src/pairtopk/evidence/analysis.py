"""Linguistic profile and K-stability of the selected evidence."""

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from itertools import pairwise
from pathlib import Path

from pairtopk.corpus.documents import Document, parse_morph
from pairtopk.errors import ComparabilityError, ConfigError, JoinError
from pairtopk.evidence.records import SPECIAL, EvidenceRecord, check_role
from pairtopk.model.layers import ROLES

FEATURE_KINDS = ("POS", "Dep", "Morph")


def join_annotations(records: list[EvidenceRecord], documents: dict[str, Document]) -> dict:
    """Attach POS/Dep/Morph to every entry in place.

    Markers and other tokens without a document position become ``SPECIAL``.
    Returns counts showing that every entry was accounted for.
    """
    annotated = special = 0
    for rec in records:
        doc = documents.get(rec.doc_id)
        for e in rec.entries:
            if e.doc_token < 0:
                e.pos = e.dep = e.morph = SPECIAL
                special += 1
                continue
            if doc is None or doc.annotations is None or e.doc_token >= len(doc.annotations):
                raise JoinError(f"no annotation for document {rec.doc_id} token {e.doc_token}")
            ann = doc.annotations[e.doc_token]
            e.pos, e.dep, e.morph = ann.pos, ann.dep, ann.morph
            annotated += 1
    return {"entries": annotated + special, "annotated": annotated, "special": special}


@dataclass
class FeatureDistribution:
    query_role: str
    feature_kind: str
    counts: dict[str, int] = field(default_factory=dict)
    total: int = 0
    n_tokens: int = 0
    n_special: int = 0

    @property
    def percentages(self) -> dict[str, float]:
        if not self.total:
            return {}
        return {k: 100.0 * v / self.total for k, v in self.counts.items()}

    def rows(self) -> list[tuple[str, int, float]]:
        pct = self.percentages
        ordered = sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return [(k, v, pct[k]) for k, v in ordered]


def _features(entry, kind: str) -> list[str]:
    if kind == "POS":
        return [entry.pos]
    if kind == "Dep":
        return [entry.dep]
    return parse_morph(entry.morph)


def feature_distribution(records: list[EvidenceRecord], query_role: str, feature_kind: str) -> FeatureDistribution:
    """Count features over selected tokens of one role (``all`` pools roles).

    Morph strings contribute each ``key=value`` atom once.  SPECIAL tokens
    are tallied in ``n_special`` and kept out of the percentages.
    """
    check_role(query_role)
    if feature_kind not in FEATURE_KINDS:
        raise ConfigError(f"feature kind must be one of {FEATURE_KINDS}, got {feature_kind!r}")
    chosen = [r for r in records if query_role == "all" or r.query_role == query_role]
    if not chosen:
        raise ConfigError(f"no evidence records for role {query_role!r}")
    dist = FeatureDistribution(query_role, feature_kind)
    counts: Counter = Counter()
    for rec in chosen:
        for e in rec.entries:
            if e.pos is None:
                raise JoinError(f"record {rec.instance_id}/{rec.query_role} has not been joined with annotations")
            if e.is_special:
                dist.n_special += 1
                continue
            dist.n_tokens += 1
            counts.update(_features(e, feature_kind))
    dist.counts = dict(counts)
    dist.total = sum(counts.values())
    return dist


def write_distribution_csv(dist: FeatureDistribution, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "count", "percentage"])
        for feature, count, pct in dist.rows():
            w.writerow([feature, count, round(pct, 6)])


def jaccard(a: set, b: set) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def _index(records: list[EvidenceRecord]) -> dict[tuple[str, str], EvidenceRecord]:
    return {(r.instance_id, r.query_role): r for r in records}


def stability_report(dumps: dict[int, list[EvidenceRecord]]) -> list[dict]:
    """Mean Jaccard overlap and containment rate between consecutive K values, per role."""
    if len(dumps) < 2:
        raise ComparabilityError("stability needs evidence dumps for at least two K values")
    ks = sorted(dumps)
    indexed = {k: _index(dumps[k]) for k in ks}
    rows = []
    for lo, hi in pairwise(ks):
        if set(indexed[lo]) != set(indexed[hi]):
            raise ComparabilityError(f"K={lo} and K={hi} dumps cover different instances")
        for role in ROLES:
            keys = [key for key in indexed[lo] if key[1] == role]
            if not keys:
                continue
            overlaps = [jaccard(indexed[lo][key].indices, indexed[hi][key].indices) for key in keys]
            nested = [indexed[lo][key].indices <= indexed[hi][key].indices for key in keys]
            rows.append({
                "k_low": lo,
                "k_high": hi,
                "role": role,
                "mean_jaccard": sum(overlaps) / len(overlaps),
                "containment": sum(nested) / len(nested),
            })
    return rows


def write_stability_csv(rows: list[dict], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k_low", "k_high", "role", "mean_jaccard", "containment"])
        for r in rows:
            w.writerow([r["k_low"], r["k_high"], r["role"], round(r["mean_jaccard"], 6), round(r["containment"], 6)])


def signal_recovery(records: list[EvidenceRecord], gold: dict[str, dict], role: str = "pair",
                    correct_only: bool = True) -> dict:
    """Share of records whose selection contains the planted signal token."""
    check_role(role)
    hits = total = 0
    for rec in records:
        if rec.query_role != role and role != "all":
            continue
        g = gold.get(rec.instance_id)
        if g is None:
            continue
        if correct_only and rec.predicted_label != rec.gold_label:
            continue
        total += 1
        hits += any(e.doc_token == g["token_index"] for e in rec.entries)
    return {"role": role, "hits": hits, "total": total, "recovery": hits / total if total else 0.0}


def role_separation(records: list[EvidenceRecord], vocabulary: set[str]) -> list[dict]:
    """Total-variation distance between roles' distributions over the given word set.

    Entries whose surface is outside ``vocabulary`` are pooled into one
    ``<other>`` bucket so each distribution sums to one.
    """
    counts: dict[str, Counter] = defaultdict(Counter)
    for rec in records:
        for e in rec.entries:
            counts[rec.query_role][e.surface if e.surface in vocabulary else "<other>"] += 1

    def normalized(c: Counter) -> dict[str, float]:
        n = sum(c.values())
        return {k: v / n for k, v in c.items()} if n else {}

    rows = []
    for a, b in (("pair", "e1"), ("pair", "e2"), ("e1", "e2")):
        pa, pb = normalized(counts[a]), normalized(counts[b])
        keys = set(pa) | set(pb)
        tv = 0.5 * sum(abs(pa.get(k, 0.0) - pb.get(k, 0.0)) for k in keys)
        rows.append({"role_a": a, "role_b": b, "tv_distance": tv})
    return rows
