"""The full network: pooling, contextual encoding, pair-conditioned evidence, three heads."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from pairtopk.corpus.window import Instance
from pairtopk.errors import CompatibilityError, ConfigError
from pairtopk.model import layers
from pairtopk.model.layers import ROLES
from pairtopk.tensor import ParameterSet, Tensor, cross_entropy, embedding_lookup, layernorm
from pairtopk.tensor.functional import check_probability

HEADS = ("biaffine", "context", "fusion")


@dataclass
class ModelConfig:
    d_model: int = 32
    n_heads: int = 8
    encoder_layers: int = 1
    ffn_hidden: int = 512
    dropout: float = 0.5
    top_k: int = 20
    n_labels: int = 5
    vocab_size: int = 1000
    max_words: int = 128
    seed: int = 0

    def validate(self) -> "ModelConfig":
        if self.d_model < 1 or self.n_heads < 1 or self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} must be a positive multiple of n_heads={self.n_heads}")
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if min(self.encoder_layers, self.ffn_hidden, self.n_labels, self.vocab_size, self.max_words) < 1:
            raise ConfigError("layer counts and sizes must be positive")
        check_probability(self.dropout)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "ModelConfig":
        names = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for k, v in values.items():
            if k not in names:
                raise ConfigError(f"unknown model config key {k!r}")
            kwargs[k] = float(v) if k == "dropout" else int(v)
        return cls(**kwargs).validate()


@dataclass
class Batch:
    ids: np.ndarray  # [B, n]
    subword_mask: np.ndarray  # [B, n]
    membership: np.ndarray  # [B, M, n]
    word_mask: np.ndarray  # [B, M]
    e1_mask: np.ndarray
    e2_mask: np.ndarray
    labels: np.ndarray
    word_counts: np.ndarray

    @classmethod
    def collate(cls, instances: list[Instance], pad_subwords: int = 0, pad_words: int = 0) -> "Batch":
        n = max(len(i.subword_ids) for i in instances) + pad_subwords
        m = max(i.word_count for i in instances) + pad_words
        b = len(instances)
        ids = np.zeros((b, n), dtype=np.int64)
        sub_mask = np.zeros((b, n), dtype=bool)
        owner = np.full((b, n), -1, dtype=np.int64)
        word_mask = np.zeros((b, m), dtype=bool)
        e1 = np.zeros((b, m), dtype=bool)
        e2 = np.zeros((b, m), dtype=bool)
        for r, inst in enumerate(instances):
            k, w = len(inst.subword_ids), inst.word_count
            ids[r, :k] = inst.subword_ids
            sub_mask[r, :k] = True
            owner[r, :k] = inst.alignment.subword_to_word
            word_mask[r, :w] = True
            e1[r, :w] = inst.e1_mask
            e2[r, :w] = inst.e2_mask
        membership = owner[:, None, :] == np.arange(m)[None, :, None]
        labels = np.asarray([i.label for i in instances], dtype=np.int64)
        counts = np.asarray([i.word_count for i in instances], dtype=np.int64)
        return cls(ids, sub_mask, membership, word_mask, e1, e2, labels, counts)


@dataclass
class ForwardTrace:
    word_reps: np.ndarray  # contextual word representations [M, d]
    h_e1: np.ndarray
    h_e2: np.ndarray
    h_pair: np.ndarray
    attention: np.ndarray  # [3, M] head-averaged weights for roles e1, e2, pair
    topk_indices: dict[str, np.ndarray]
    topk_weights: dict[str, np.ndarray]
    evidence: dict[str, np.ndarray]  # h_k per role
    head_logits: np.ndarray  # [3, n_labels] biaffine, context, fusion
    probabilities: np.ndarray  # fused [n_labels]


@dataclass
class BatchOutput:
    fused_logits: Tensor
    probabilities: np.ndarray
    traces: list[ForwardTrace] = field(default_factory=list)


class PairTopKModel:
    def __init__(self, config: ModelConfig, vocab_fingerprint: str = ""):
        self.config = config.validate()
        self.vocab_fingerprint = vocab_fingerprint
        self.params = ParameterSet(config.seed)
        self.rng = np.random.default_rng(config.seed)
        self._build()

    def _build(self) -> None:
        c = self.config
        d, f, n_labels = c.d_model, c.ffn_hidden, c.n_labels
        add = self.params.add
        add("embed.subword", (c.vocab_size, d), "normal")
        add("embed.ln.gamma", (d,), "ones")
        add("embed.ln.beta", (d,), "zeros")
        add("encoder.pos", (c.max_words, d), "normal")
        for layer in range(c.encoder_layers):
            pre = f"encoder.{layer}"
            for ln in ("ln1", "ln2"):
                add(f"{pre}.{ln}.gamma", (d,), "ones")
                add(f"{pre}.{ln}.beta", (d,), "zeros")
            for proj in ("q", "k", "v"):
                add(f"{pre}.attn.w{proj}", (d, d))
                add(f"{pre}.attn.b{proj}", (d,), "zeros")
            # residual branches start closed: the block is the identity at init
            add(f"{pre}.attn.wo", (d, d), "zeros")
            add(f"{pre}.attn.bo", (d,), "zeros")
            add(f"{pre}.ffn.w1", (d, f))
            add(f"{pre}.ffn.b1", (f,), "zeros")
            add(f"{pre}.ffn.w2", (f, d), "zeros")
            add(f"{pre}.ffn.b2", (d,), "zeros")
        add("pair.w", (2 * d, d))
        add("pair.b", (d,), "zeros")
        for role in ROLES:
            add(f"evidence.query.{role}.w", (d, d))
            add(f"evidence.query.{role}.b", (d,), "zeros")
        for proj in ("k", "v", "o"):
            add(f"evidence.w{proj}", (d, d))
            add(f"evidence.b{proj}", (d,), "zeros")
        add("gate.labels", (n_labels, d), "normal")
        add("gate.w", (2 * d, d))
        add("gate.b", (d,), "zeros")
        add("biaffine.u", (n_labels, d + 1, d + 1))
        add("biaffine.w", (2 * d + 2, n_labels))
        add("biaffine.b", (n_labels,), "zeros")
        for head, width in (("context", 3 * d), ("fusion", 4 * d)):
            add(f"{head}.w1", (width, f))
            add(f"{head}.b1", (f,), "zeros")
            add(f"{head}.w2", (f, n_labels))
            add(f"{head}.b2", (n_labels,), "zeros")
        add("fusion.late", (3,), "ones")

    @property
    def p(self) -> ParameterSet:
        return self.params

    def check_instances(self, instances: list[Instance]) -> None:
        for inst in instances:
            if self.vocab_fingerprint and inst.vocab_fingerprint != self.vocab_fingerprint:
                raise CompatibilityError(
                    f"instance {inst.instance_id} was encoded with vocabulary {inst.vocab_fingerprint}, "
                    f"model expects {self.vocab_fingerprint}"
                )

    def forward_batch(self, instances: list[Instance], training: bool = False, traces: bool = True,
                      top_k: int | None = None, batch: Batch | None = None) -> BatchOutput:
        c = self.config
        p = self.params
        k = top_k or c.top_k
        batch = batch or Batch.collate(instances)
        drop = dict(drop=c.dropout, rng=self.rng, training=training)

        x = layernorm(embedding_lookup(p["embed.subword"], batch.ids), p["embed.ln.gamma"], p["embed.ln.beta"])
        words = layers.word_embeddings(x, batch.membership, batch.word_mask)
        h_e1, h_e2 = layers.entity_embeddings(words, batch.e1_mask, batch.e2_mask)
        context = layers.contextual_encode(words, batch.word_mask, p, n_layers=c.encoder_layers,
                                           n_heads=c.n_heads, max_words=c.max_words, **drop)
        h_pair = layers.pair_projection(h_e1, h_e2, p["pair.w"], p["pair.b"])
        evidence = layers.pair_conditioned_evidence({"e1": h_e1, "e2": h_e2, "pair": h_pair}, context,
                                                    batch.word_mask, k, p, c.n_heads)
        gated = layers.label_gate(h_pair, p["gate.labels"], p["gate.w"], p["gate.b"])
        logits = [
            layers.biaffine_head(h_e1, h_e2, p["biaffine.u"], p["biaffine.w"], p["biaffine.b"]),
            layers.context_head(evidence["e1"].h_k, evidence["e2"].h_k, evidence["pair"].h_k, p, **drop),
            layers.fusion_head(h_e1, h_e2, gated, evidence["pair"].h_k, p, **drop),
        ]
        fused, probs = layers.late_fusion(logits, p["fusion.late"])
        out = BatchOutput(fused, probs.data)
        if traces:
            for r in range(len(batch.labels)):
                m = int(batch.word_counts[r])
                out.traces.append(ForwardTrace(
                    word_reps=context.data[r, :m],
                    h_e1=h_e1.data[r],
                    h_e2=h_e2.data[r],
                    h_pair=h_pair.data[r],
                    attention=np.stack([evidence[role].distribution[r, :m] for role in ROLES]),
                    topk_indices={role: evidence[role].indices[r] for role in ROLES},
                    topk_weights={role: evidence[role].weights[r] for role in ROLES},
                    evidence={role: evidence[role].h_k.data[r] for role in ROLES},
                    head_logits=np.stack([t.data[r] for t in logits]),
                    probabilities=probs.data[r],
                ))
        return out

    def forward(self, instance: Instance, mode: str = "eval", top_k: int | None = None) -> ForwardTrace:
        if mode not in ("train", "eval"):
            raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
        return self.forward_batch([instance], training=mode == "train", top_k=top_k).traces[0]

    def loss(self, instances: list[Instance], training: bool = False, top_k: int | None = None,
             batch: Batch | None = None) -> Tensor:
        batch = batch or Batch.collate(instances)
        out = self.forward_batch(instances, training=training, traces=False, top_k=top_k, batch=batch)
        return cross_entropy(out.fused_logits, batch.labels)
