"""Neural-network operations on :class:`Tensor`.

Fused ops (softmax, layernorm, cross-entropy) carry their own backward
rules; everything else composes primitives from :mod:`pairtopk.tensor.core`.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from pairtopk.errors import ConfigError, DimensionError, EmptySupportError, NumericError
from pairtopk.tensor.core import Tensor, _make, as_tensor, matmul, swapaxes

LAYERNORM_EPS = 1e-5


def softmax(x: Tensor, axis: int = -1, mask=None, allow_empty: bool = False) -> Tensor:
    """Max-subtracted softmax; masked-out positions get exactly zero weight.

    A slice with no unmasked position raises ``EmptySupportError`` unless
    ``allow_empty`` is set, in which case the slice is all zeros.
    """
    x = as_tensor(x)
    if np.isnan(x.data).any():
        raise NumericError("softmax input contains NaN")
    if mask is None:
        shifted = x.data - x.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)
    else:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        support = keep.any(axis=axis, keepdims=True)
        if not allow_empty and not support.all():
            raise EmptySupportError("softmax over a slice with every position masked")
        masked = np.where(keep, x.data, -np.inf)
        top = np.where(support, masked.max(axis=axis, keepdims=True), 0.0)
        e = np.where(keep, np.exp(masked - top), 0.0)
        total = e.sum(axis=axis, keepdims=True)
        out = e / np.where(support, total, 1.0)

    def fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), fn)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def fn(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _make(out, (x,), fn)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under ``softmax(logits)``."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise DimensionError(
            f"cross_entropy expects logits [B, C] and targets [B], got {logits.shape} and {targets.shape}"
        )
    if np.isnan(logits.data).any():
        raise NumericError("cross_entropy logits contain NaN")
    n = logits.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), targets].mean()

    def fn(g):
        grad = np.exp(logp)
        grad[np.arange(n), targets] -= 1.0
        return (grad * (g / n),)

    return _make(np.asarray(loss), (logits,), fn)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x.data * x.data) / math.sqrt(2.0 * math.pi)
    return _make(x.data * cdf, (x,), lambda g: (g * (cdf + x.data * pdf),))


def layernorm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None,
              eps: float = LAYERNORM_EPS) -> Tensor:
    """Normalize over the last axis, then apply the optional affine map."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    g_data = gamma.data if gamma is not None else 1.0
    out = xhat * g_data + (beta.data if beta is not None else 0.0)
    parents = tuple(t for t in (x, gamma, beta) if t is not None)
    lead = tuple(range(x.ndim - 1))

    def fn(g):
        dxhat = g * g_data
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        grads = [dx]
        if gamma is not None:
            grads.append((g * xhat).sum(axis=lead))
        if beta is not None:
            grads.append(g.sum(axis=lead))
        return tuple(grads)

    return _make(out, parents, fn)


def check_probability(p: float) -> float:
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must lie in [0, 1), got {p}")
    return p


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: identity in eval mode, scale kept units by 1/(1-p) in training."""
    check_probability(p)
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("training-mode dropout needs a seeded generator")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return _make(x.data * keep, (x,), lambda g: (g * keep,))


def embedding_lookup(weight: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise DimensionError(f"embedding id out of range for table of {weight.shape[0]} rows")

    def fn(g):
        full = np.zeros_like(weight.data)
        np.add.at(full, ids, g)
        return (full,)

    return _make(weight.data[ids], (weight,), fn)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as [in, out]."""
    y = matmul(x, weight)
    return y + bias if bias is not None else y


def scaled_dot_attention(query: Tensor, keys: Tensor, values: Tensor, mask=None,
                         allow_empty: bool = False) -> tuple[Tensor, Tensor]:
    """Projection-free attention ``softmax(q k^T / sqrt(d)) v``.

    Shapes are ``[..., q, d]``, ``[..., n, d]``, ``[..., n, d]``; ``mask`` is a
    boolean array broadcastable to ``[..., q, n]`` (a plain ``[n]`` vector works).
    Returns the attended output and the weight matrix.
    """
    query, keys, values = as_tensor(query), as_tensor(keys), as_tensor(values)
    d = query.shape[-1]
    if keys.shape[-1] != d or keys.shape[-2] != values.shape[-2]:
        raise DimensionError(
            f"attention shape mismatch: query {query.shape}, keys {keys.shape}, values {values.shape}"
        )
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape[-1] != keys.shape[-2]:
            raise DimensionError(f"mask length {mask.shape[-1]} != number of keys {keys.shape[-2]}")
    scores = matmul(query, swapaxes(keys, -1, -2)) * (1.0 / math.sqrt(d))
    weights = softmax(scores, axis=-1, mask=mask, allow_empty=allow_empty)
    return matmul(weights, values), weights
