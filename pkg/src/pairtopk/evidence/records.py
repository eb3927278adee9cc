"""Per-instance, per-query-role top-K evidence records and their JSONL form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from pairtopk.corpus.window import Instance
from pairtopk.errors import ConfigError, DataError
from pairtopk.model.layers import ROLES
from pairtopk.model.network import ForwardTrace

SPECIAL = "SPECIAL"


@dataclass
class Entry:
    word_index: int
    surface: str
    weight: float
    doc_token: int  # document token index, -1 for markers
    pos: str | None = None
    dep: str | None = None
    morph: str | None = None

    @property
    def is_special(self) -> bool:
        return self.pos == SPECIAL


@dataclass
class EvidenceRecord:
    instance_id: str
    doc_id: str
    query_role: str
    predicted_label: str
    gold_label: str
    k: int
    entries: list[Entry] = field(default_factory=list)

    def to_json(self) -> str:
        rec = {
            "instance_id": self.instance_id,
            "doc_id": self.doc_id,
            "query_role": self.query_role,
            "k": self.k,
            "predicted_label": self.predicted_label,
            "gold_label": self.gold_label,
            "entries": [
                {"word_index": e.word_index, "surface": e.surface, "weight": e.weight, "doc_token": e.doc_token}
                for e in self.entries
            ],
        }
        return json.dumps(rec, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "EvidenceRecord":
        rec = json.loads(line)
        role = rec["query_role"]
        if role not in ROLES:
            raise DataError(f"unknown query role {role!r}")
        entries = [Entry(e["word_index"], e["surface"], float(e["weight"]), e["doc_token"]) for e in rec["entries"]]
        return cls(rec["instance_id"], rec["doc_id"], role, rec["predicted_label"], rec["gold_label"],
                   int(rec["k"]), entries)

    @property
    def indices(self) -> set[int]:
        return {e.word_index for e in self.entries}


def records_from_traces(instances: list[Instance], traces: list[ForwardTrace], predictions,
                        label_names, k: int) -> list[EvidenceRecord]:
    """One record per (instance, role), ordered by instance id then role."""
    if len(instances) != len(traces) or len(traces) != len(predictions):
        raise DataError("instances, traces and predictions differ in length")
    records = []
    for inst, trace, pred in zip(instances, traces, predictions):
        for role in ROLES:
            entries = [
                Entry(int(i), inst.words[i], float(w), int(inst.word_doc_index[i]))
                for i, w in zip(trace.topk_indices[role], trace.topk_weights[role])
            ]
            records.append(EvidenceRecord(inst.instance_id, inst.doc_id, role, label_names[int(pred)],
                                          label_names[inst.label], k, entries))
    order = {r: i for i, r in enumerate(ROLES)}
    records.sort(key=lambda r: (r.instance_id, order[r.query_role]))
    return records


def dump_evidence(records: list[EvidenceRecord], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def load_evidence(path) -> list[EvidenceRecord]:
    with Path(path).open(encoding="utf-8") as fh:
        return [EvidenceRecord.from_json(line) for line in fh if line.strip()]


def check_role(role: str) -> str:
    if role not in (*ROLES, "all"):
        raise ConfigError(f"unknown query role {role!r}; expected one of {(*ROLES, 'all')}")
    return role
