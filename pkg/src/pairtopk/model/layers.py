"""Building blocks of the pair-conditioned evidence network.

Every function accepts optional leading batch dimensions so the same code
serves single instances and padded batches.  Masks are plain boolean numpy
arrays; they never carry gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pairtopk.errors import AlignmentError, ConfigError, DimensionError, EmptySupportError, LengthError, MaskError
from pairtopk.tensor import (
    Tensor,
    concat,
    dropout,
    gelu,
    getitem,
    layernorm,
    linear,
    matmul,
    reshape,
    scaled_dot_attention,
    sigmoid,
    softmax,
    swapaxes,
    transpose,
)

ROLES = ("e1", "e2", "pair")


def _masked_mean_weights(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=float)
    count = mask.sum(axis=-1, keepdims=True)
    return np.divide(mask, count, out=np.zeros_like(mask), where=count > 0)


def attention_pool(rows: Tensor, mask=None, allow_empty: bool = False) -> Tensor:
    """Attend over ``rows`` [..., n, d] with their masked mean as the query."""
    n = rows.shape[-2]
    mask = np.ones(rows.shape[:-1], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape[-1] != n:
        raise DimensionError(f"mask length {mask.shape[-1]} != {n} rows")
    if not allow_empty and not mask.any(axis=-1).all():
        raise EmptySupportError("attention_pool over a fully masked set")
    avg = _masked_mean_weights(mask)[..., None, :]
    query = matmul(Tensor(avg), rows)
    out, _ = scaled_dot_attention(query, rows, rows, mask[..., None, :], allow_empty=allow_empty)
    return reshape(out, out.shape[:-2] + (out.shape[-1],))


def word_embeddings(subword_reps: Tensor, membership: np.ndarray, word_mask: np.ndarray | None = None) -> Tensor:
    """Pool each word's own subwords: query is their mean, keys/values are the subwords.

    ``membership`` is boolean [..., M, n]; ``word_mask`` marks real (non-padding)
    words.  Padding words come out as zero rows.
    """
    membership = np.asarray(membership, dtype=bool)
    counts = membership.sum(axis=-1)
    real = np.ones(counts.shape, dtype=bool) if word_mask is None else np.asarray(word_mask, dtype=bool)
    if np.any(real & (counts == 0)):
        raise AlignmentError("a word has no subwords")
    query = matmul(Tensor(_masked_mean_weights(membership)), subword_reps)
    out, _ = scaled_dot_attention(query, subword_reps, subword_reps, membership, allow_empty=True)
    return out


def entity_embeddings(word_reps: Tensor, e1_mask, e2_mask) -> tuple[Tensor, Tensor]:
    for name, m in (("e1", e1_mask), ("e2", e2_mask)):
        if not np.asarray(m, dtype=bool).any(axis=-1).all():
            raise MaskError(f"{name} entity mask is empty")
    return attention_pool(word_reps, e1_mask), attention_pool(word_reps, e2_mask)


def split_heads(x: Tensor, n_heads: int) -> Tensor:
    """[..., L, d] -> [..., H, L, d/H]"""
    *lead, length, d = x.shape
    x = reshape(x, (*lead, length, n_heads, d // n_heads))
    return swapaxes(x, -2, -3)


def merge_heads(x: Tensor) -> Tensor:
    """[..., H, L, dh] -> [..., L, H*dh]"""
    *lead, h, length, dh = x.shape
    return reshape(swapaxes(x, -2, -3), (*lead, length, h * dh))


def self_attention(x: Tensor, mask: np.ndarray, p: dict, prefix: str, n_heads: int) -> Tensor:
    q = split_heads(linear(x, p[f"{prefix}.wq"], p[f"{prefix}.bq"]), n_heads)
    k = split_heads(linear(x, p[f"{prefix}.wk"], p[f"{prefix}.bk"]), n_heads)
    v = split_heads(linear(x, p[f"{prefix}.wv"], p[f"{prefix}.bv"]), n_heads)
    key_mask = np.asarray(mask, dtype=bool)[..., None, None, :]
    out, _ = scaled_dot_attention(q, k, v, key_mask)
    return linear(merge_heads(out), p[f"{prefix}.wo"], p[f"{prefix}.bo"])


def contextual_encode(word_reps: Tensor, word_mask: np.ndarray, p: dict, *, n_layers: int, n_heads: int,
                      max_words: int, drop: float = 0.0, rng=None, training: bool = False) -> Tensor:
    """Learned positions, then pre-norm self-attention + GELU feed-forward blocks with residuals."""
    m = word_reps.shape[-2]
    if m > max_words:
        raise LengthError(f"{m} words exceed max_words={max_words}")
    x = word_reps + getitem(p["encoder.pos"], slice(0, m))
    for layer in range(n_layers):
        pre = f"encoder.{layer}"
        h = layernorm(x, p[f"{pre}.ln1.gamma"], p[f"{pre}.ln1.beta"])
        x = x + dropout(self_attention(h, word_mask, p, f"{pre}.attn", n_heads), drop, rng, training)
        h = layernorm(x, p[f"{pre}.ln2.gamma"], p[f"{pre}.ln2.beta"])
        f = linear(gelu(linear(h, p[f"{pre}.ffn.w1"], p[f"{pre}.ffn.b1"])), p[f"{pre}.ffn.w2"], p[f"{pre}.ffn.b2"])
        x = x + dropout(f, drop, rng, training)
    return x


def pair_projection(h_e1: Tensor, h_e2: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    if h_e1.shape != h_e2.shape:
        raise DimensionError(f"entity widths differ: {h_e1.shape} vs {h_e2.shape}")
    return linear(concat([h_e1, h_e2], axis=-1), w, b)


def select_top_k(weights: np.ndarray, mask, k: int) -> list[np.ndarray]:
    """Indices of the ``min(k, unmasked)`` largest weights per row.

    Sorted by descending weight; equal weights go to the lower index.
    """
    if k < 1:
        raise ConfigError(f"top_k must be >= 1, got {k}")
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    mask = np.ones(weights.shape, dtype=bool) if mask is None else np.atleast_2d(np.asarray(mask, dtype=bool))
    out = []
    for w, m in zip(weights, mask):
        cand = np.flatnonzero(m)
        if cand.size == 0:
            raise EmptySupportError("top-k selection over an empty context")
        order = cand[np.argsort(-w[cand], kind="stable")]
        out.append(order[:k])
    return out


@dataclass
class Evidence:
    h_k: Tensor  # [B, d]
    indices: list[np.ndarray]  # per row, descending weight
    weights: list[np.ndarray]  # head-averaged weight at each selected index
    distribution: np.ndarray  # [B, M] head-averaged weights over all words


def project_context(context: Tensor, p: dict, n_heads: int) -> tuple[Tensor, Tensor]:
    keys = split_heads(linear(context, p["evidence.wk"], p["evidence.bk"]), n_heads)
    values = split_heads(linear(context, p["evidence.wv"], p["evidence.bv"]), n_heads)
    return keys, values


def topk_cross_attention(query: Tensor, keys: Tensor, values: Tensor, mask: np.ndarray, k: int,
                         w_q: Tensor, b_q: Tensor | None, w_o: Tensor, b_o: Tensor | None) -> Evidence:
    """Select the top-``k`` context rows for one query role and re-attend over them.

    ``query`` is [B, d]; ``keys``/``values`` are head-split context projections
    [B, H, M, dh].  The head-averaged attention picks the rows; the projected
    query then attends again over the selected rows only.
    """
    if k < 1:
        raise ConfigError(f"top_k must be >= 1, got {k}")
    batch, n_heads, m, dh = keys.shape
    mask = np.asarray(mask, dtype=bool).reshape(batch, m)
    if not mask.any(axis=-1).all():
        raise EmptySupportError("cross-attention over an empty context")
    q = reshape(linear(query, w_q, b_q), (batch, n_heads, 1, dh))
    scores = matmul(q, swapaxes(keys, -1, -2)) * (1.0 / math.sqrt(dh))  # [B, H, 1, M]
    full = softmax(Tensor(scores.data), axis=-1, mask=mask[:, None, None, :]).data
    distribution = full.mean(axis=1)[:, 0, :]
    indices = select_top_k(distribution, mask, k)
    chosen = np.zeros((batch, m), dtype=bool)
    for row, idx in enumerate(indices):
        chosen[row, idx] = True
    sparse = softmax(scores, axis=-1, mask=chosen[:, None, None, :])
    pooled = reshape(matmul(sparse, values), (batch, n_heads * dh))
    h_k = linear(pooled, w_o, b_o)
    weights = [distribution[row, idx] for row, idx in enumerate(indices)]
    return Evidence(h_k, indices, weights, distribution)


def pair_conditioned_evidence(queries: dict[str, Tensor], context: Tensor, mask: np.ndarray, k: int,
                              p: dict, n_heads: int) -> dict[str, Evidence]:
    """Run top-k cross-attention for each query role with its own query projection."""
    keys, values = project_context(context, p, n_heads)
    return {
        role: topk_cross_attention(
            queries[role], keys, values, mask, k,
            p[f"evidence.query.{role}.w"], p[f"evidence.query.{role}.b"],
            p["evidence.wo"], p["evidence.bo"],
        )
        for role in ROLES
    }


def label_gate(h: Tensor, label_embeddings: Tensor, w_g: Tensor, b_g: Tensor) -> Tensor:
    """Blend ``h`` with its attention mixture of label prototypes through a sigmoid gate."""
    if h.shape[-1] != label_embeddings.shape[-1]:
        raise DimensionError(f"gate width mismatch: {h.shape} vs {label_embeddings.shape}")
    lead = h.shape[:-1]
    query = reshape(h, (*lead, 1, h.shape[-1]))
    mixed, _ = scaled_dot_attention(query, label_embeddings, label_embeddings)
    mixed = reshape(mixed, h.shape)
    g = sigmoid(linear(concat([h, mixed], axis=-1), w_g, b_g))
    return g * h + (1.0 - g) * mixed


def _with_bias_feature(h: Tensor) -> Tensor:
    return concat([h, Tensor(np.ones(h.shape[:-1] + (1,)))], axis=-1)


def biaffine_head(h_e1: Tensor, h_e2: Tensor, u: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``x1^T U_c x2 + w_c^T [x1; x2] + b_c`` with a constant 1 appended to each entity."""
    if h_e1.shape != h_e2.shape:
        raise DimensionError(f"entity widths differ: {h_e1.shape} vs {h_e2.shape}")
    x1, x2 = _with_bias_feature(h_e1), _with_bias_feature(h_e2)
    n_labels, d1, _ = u.shape
    flat = reshape(transpose(u, (1, 0, 2)), (d1, n_labels * d1))
    t = reshape(matmul(x1, flat), x1.shape[:-1] + (n_labels, d1))
    x2_rows = reshape(x2, x2.shape[:-1] + (1, d1))
    bilinear = (t * x2_rows).sum(axis=-1)
    return bilinear + linear(concat([x1, x2], axis=-1), w, b)


def mlp_head(inputs: list[Tensor], w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor,
             drop: float = 0.0, rng=None, training: bool = False) -> Tensor:
    hidden = gelu(linear(concat(inputs, axis=-1), w1, b1))
    return linear(dropout(hidden, drop, rng, training), w2, b2)


def context_head(hk_e1: Tensor, hk_e2: Tensor, hk_pair: Tensor, p: dict, **kw) -> Tensor:
    """Scores from the three evidence aggregates only."""
    return mlp_head([hk_e1, hk_e2, hk_pair], p["context.w1"], p["context.b1"], p["context.w2"], p["context.b2"], **kw)


def fusion_head(h_e1: Tensor, h_e2: Tensor, gated_pair: Tensor, hk_pair: Tensor, p: dict, **kw) -> Tensor:
    return mlp_head([h_e1, h_e2, gated_pair, hk_pair], p["fusion.w1"], p["fusion.b1"], p["fusion.w2"],
                    p["fusion.b2"], **kw)


def late_fusion(logits: list[Tensor], w: Tensor) -> tuple[Tensor, Tensor]:
    """Weighted logit sum and its softmax."""
    if len({t.shape for t in logits}) != 1:
        raise DimensionError("late fusion needs equal-length logit vectors")
    fused = logits[0] * getitem(w, 0)
    for i, t in enumerate(logits[1:], start=1):
        fused = fused + t * getitem(w, i)
    return fused, softmax(fused, axis=-1)
