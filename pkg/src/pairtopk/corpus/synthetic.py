"""Seeded synthetic pair corpora with one planted signal word per pair.

Each document holds a single entity pair.  The pair's label is fixed by a
dedicated signal word placed between the two entities (or just outside the
pair when the entities are adjacent), so a lookup of that word recovers every
label.  Filler and event words are pseudo-words with fixed per-type
annotations, which lets the evidence analysis run end to end.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from pairtopk.corpus.documents import Annotation, Document, PairDataset, PairExample
from pairtopk.errors import ConfigError

DEFAULT_SIGNALS = {"a": "after", "b": "before", "s": "while", "i": "throughout", "ii": "during"}

_FILLER_TAGS = [
    ("NOUN", "nsubj", "Number=Sing"),
    ("NOUN", "pobj", "Number=Plur"),
    ("PROPN", "compound", "Number=Sing"),
    ("ADJ", "amod", "Degree=Pos"),
    ("DET", "det", "Definite=Def|PronType=Art"),
    ("ADP", "prep", "_"),
    ("PRON", "nsubj", "Person=3|PronType=Prs"),
    ("ADV", "advmod", "_"),
]
_EVENT_TAGS = [
    ("VERB", "ROOT", "Tense=Past|VerbForm=Fin"),
    ("VERB", "advcl", "Aspect=Perf|Tense=Past|VerbForm=Part"),
    ("VERB", "ccomp", "Tense=Pres|VerbForm=Fin"),
    ("NOUN", "dobj", "Number=Sing"),
]
_SIGNAL_TAG = ("SCONJ", "mark", "_")


@dataclass
class SyntheticSpec:
    n_train: int = 1000
    n_validation: int = 200
    n_test: int = 200
    vocab_size: int = 300
    n_events: int = 60
    signal_words: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_SIGNALS))
    distance_min: int = 1
    distance_max: int = 10
    margin_min: int = 2
    margin_max: int = 8
    max_entity_len: int = 2
    seed: int = 7

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.signal_words)

    def validate(self) -> None:
        if not self.signal_words:
            raise ConfigError("every label needs a signal word; none given")
        if len(set(self.signal_words.values())) != len(self.signal_words):
            raise ConfigError("signal words must be distinct per label")
        if self.vocab_size < len(self.signal_words):
            raise ConfigError(
                f"vocab_size {self.vocab_size} is smaller than the {len(self.signal_words)} signal words"
            )
        if not 1 <= self.distance_min <= self.distance_max:
            raise ConfigError("distance range must satisfy 1 <= min <= max")
        if not 0 <= self.margin_min <= self.margin_max or self.max_entity_len < 1:
            raise ConfigError("invalid margin or entity length range")
        if min(self.n_train, self.n_validation, self.n_test) < 0 or self.n_events < 1:
            raise ConfigError("split sizes must be non-negative and n_events positive")

    # key=value file round trip

    def to_text(self) -> str:
        d = asdict(self)
        d["signal_words"] = ",".join(f"{k}:{v}" for k, v in self.signal_words.items())
        d["distance"] = f"uniform:{d.pop('distance_min')}:{d.pop('distance_max')}"
        return "".join(f"{k}={d[k]}\n" for k in sorted(d))

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "SyntheticSpec":
        spec = cls()
        for key, raw in values.items():
            if key == "signal_words":
                pairs = [p.split(":", 1) for p in raw.split(",") if p.strip()]
                if any(len(p) != 2 for p in pairs):
                    raise ConfigError(f"signal_words entries must be label:word, got {raw!r}")
                spec.signal_words = {k.strip(): v.strip() for k, v in pairs}
            elif key == "distance":
                parts = raw.split(":")
                if len(parts) != 3 or parts[0] != "uniform":
                    raise ConfigError(f"distance must look like uniform:LO:HI, got {raw!r}")
                spec.distance_min, spec.distance_max = int(parts[1]), int(parts[2])
            elif key in spec.__dataclass_fields__:
                try:
                    setattr(spec, key, int(raw))
                except ValueError as exc:
                    raise ConfigError(f"{key} must be an integer, got {raw!r}") from exc
            else:
                raise ConfigError(f"unknown synthetic-spec key {key!r}")
        spec.validate()
        return spec

    @classmethod
    def from_file(cls, path) -> "SyntheticSpec":
        from pairtopk.config import read_key_values

        return cls.from_mapping(read_key_values(path))


@dataclass
class SyntheticCorpus:
    dataset: PairDataset
    gold: dict[str, dict]  # pair_id -> {"token_index", "signal", "label"}


def _pseudo_words(rng: np.random.Generator, count: int, taken: set[str]) -> list[str]:
    letters = np.array(list("abcdefghijklmnopqrstuvwxyz"))
    out: list[str] = []
    while len(out) < count:
        w = "".join(rng.choice(letters, size=int(rng.integers(3, 10))))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def generate_synthetic_corpus(spec: SyntheticSpec) -> SyntheticCorpus:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    taken = set(spec.signal_words.values())
    fillers = _pseudo_words(rng, spec.vocab_size - len(spec.signal_words), taken)
    events = _pseudo_words(rng, spec.n_events, taken)
    tag_of: dict[str, tuple[str, str, str]] = {}
    for w in fillers:
        tag_of[w] = _FILLER_TAGS[int(rng.integers(len(_FILLER_TAGS)))]
    for w in events:
        tag_of[w] = _EVENT_TAGS[int(rng.integers(len(_EVENT_TAGS)))]
    for w in spec.signal_words.values():
        tag_of[w] = _SIGNAL_TAG

    labels = spec.labels
    documents: dict[str, Document] = {}
    examples: list[PairExample] = []
    gold: dict[str, dict] = {}
    splits = ["train"] * spec.n_train + ["validation"] * spec.n_validation + ["test"] * spec.n_test

    def filler(k: int) -> list[str]:
        return [fillers[int(i)] for i in rng.integers(len(fillers), size=k)]

    def event(k: int) -> list[str]:
        return [events[int(i)] for i in rng.integers(len(events), size=k)]

    for n, split in enumerate(splits):
        label = labels[int(rng.integers(len(labels)))]
        signal = spec.signal_words[label]
        distance = int(rng.integers(spec.distance_min, spec.distance_max + 1))
        len1 = int(rng.integers(1, spec.max_entity_len + 1))
        len2 = int(rng.integers(1, spec.max_entity_len + 1))
        prefix = filler(int(rng.integers(spec.margin_min, spec.margin_max + 1)))
        suffix = filler(int(rng.integers(spec.margin_min, spec.margin_max + 1)))
        gap = filler(distance - 1)
        if gap:
            gap[int(rng.integers(len(gap)))] = signal
        elif rng.random() < 0.5 or not suffix:
            prefix.append(signal)
        else:
            suffix.insert(0, signal)
        words = prefix + event(len1) + gap + event(len2) + suffix
        s1 = len(prefix)
        e1 = (s1, s1 + len1)
        s2 = e1[1] + len(gap)
        e2 = (s2, s2 + len2)
        doc_id = f"syn{n:05d}"
        doc = Document.from_text(doc_id, " ".join(words))
        doc.annotations = [Annotation(*tag_of[w]) for w in words]
        documents[doc_id] = doc
        pair = PairExample(f"{doc_id}#0", doc_id, e1, e2, label, split)
        examples.append(pair)
        gold[pair.pair_id] = {"token_index": words.index(signal), "signal": signal, "label": label}

    dataset = PairDataset(documents, examples, tuple(sorted(labels)), name="synthetic",
                          meta={"signal_words": dict(spec.signal_words)})
    return SyntheticCorpus(dataset, gold)


def signal_oracle(words: list[str], signal_words: dict[str, str]) -> str | None:
    """Recover a label by looking up the planted signal word."""
    by_word = {w: label for label, w in signal_words.items()}
    hits = [by_word[w] for w in words if w in by_word]
    return hits[0] if len(hits) == 1 else None


def write_gold(corpus: SyntheticCorpus, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for pair_id, g in corpus.gold.items():
            fh.write(json.dumps({"pair_id": pair_id, **g}) + "\n")


def read_gold(path) -> dict[str, dict]:
    gold: dict[str, dict] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                gold[rec.pop("pair_id")] = rec
    return gold
