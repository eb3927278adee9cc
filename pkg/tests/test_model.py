"""Pooling, encoder, evidence selection, gate, heads and the assembled network."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pairtopk.corpus import SyntheticSpec, generate_synthetic_corpus, make_instances, make_vocabulary
from pairtopk.errors import (
    AlignmentError,
    CompatibilityError,
    ConfigError,
    EmptySupportError,
    LengthError,
    MaskError,
)
from pairtopk.model import (
    ROLES,
    Batch,
    ModelConfig,
    PairTopKModel,
    attention_pool,
    biaffine_head,
    context_head,
    contextual_encode,
    entity_embeddings,
    fusion_head,
    label_gate,
    late_fusion,
    pair_conditioned_evidence,
    pair_projection,
    select_top_k,
    topk_cross_attention,
    word_embeddings,
)
from pairtopk.tensor import ParameterSet, Tensor, check_gradients
from pairtopk.model.layers import project_context


def softmax_np(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def rand(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


@pytest.fixture(scope="module")
def small_corpus():
    corpus = generate_synthetic_corpus(SyntheticSpec(n_train=40, n_validation=0, n_test=12, seed=3))
    vocab = make_vocabulary(corpus.dataset, 64)
    return corpus, vocab, make_instances(corpus.dataset, "test", 64, vocab)


def tiny_model(vocab, **kw):
    cfg = dict(d_model=8, n_heads=2, ffn_hidden=16, dropout=0.0, top_k=2, n_labels=5,
               vocab_size=len(vocab), max_words=96, seed=1)
    cfg.update(kw)
    return PairTopKModel(ModelConfig(**cfg), vocab.fingerprint)


# ---------------------------------------------------------------- pooling


def test_attention_pool_examples():
    rng = np.random.default_rng(0)
    v = rng.normal(size=4)
    rows = np.vstack([v, rng.normal(size=(2, 4))])
    out = attention_pool(Tensor(rows), np.array([True, False, False]))
    np.testing.assert_allclose(out.data, v, atol=1e-12)
    np.testing.assert_allclose(attention_pool(Tensor(np.tile(v, (5, 1)))).data, v, atol=1e-12)
    x = rng.normal(size=(3, 4))
    m = x.mean(axis=0)
    expected = softmax_np(m @ x.T / 2.0) @ x
    np.testing.assert_allclose(attention_pool(Tensor(x)).data, expected, atol=1e-12)
    with pytest.raises(EmptySupportError):
        attention_pool(Tensor(x), np.zeros(3, dtype=bool))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(1, 6), st.integers(0, 2**31))
def test_attention_pool_inside_hull_of_unmasked_rows(n, d, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    mask = rng.random(n) < 0.6
    mask[rng.integers(n)] = True
    out = attention_pool(Tensor(x), mask).data
    live = x[mask]
    assert np.all(out <= live.max(axis=0) + 1e-12) and np.all(out >= live.min(axis=0) - 1e-12)


def test_word_embeddings_examples():
    rng = np.random.default_rng(1)
    sub = rng.normal(size=(5, 4))
    one_each = np.eye(5, dtype=bool)[[2, 0, 4, 1, 3]]
    np.testing.assert_allclose(word_embeddings(Tensor(sub), one_each).data, sub[[2, 0, 4, 1, 3]], atol=1e-12)
    v = rng.normal(size=4)
    twin = np.vstack([v, v])
    np.testing.assert_allclose(word_embeddings(Tensor(twin), np.ones((1, 2), bool)).data[0], v, atol=1e-12)
    # a two-subword word against a hand-rolled pool over its own rows
    membership = np.array([[True, True, False], [False, False, True]])
    x = rng.normal(size=(3, 4))
    q = x[:2].mean(axis=0)
    expected = softmax_np(q @ x[:2].T / 2.0) @ x[:2]
    np.testing.assert_allclose(word_embeddings(Tensor(x), membership).data[0], expected, atol=1e-12)
    with pytest.raises(AlignmentError):
        word_embeddings(Tensor(x), np.array([[True, True, True], [False, False, False]]))


def test_entity_embeddings_pool_their_spans():
    rng = np.random.default_rng(2)
    words = rng.normal(size=(6, 4))
    e1 = np.array([0, 1, 1, 0, 0, 0], bool)
    e2 = np.array([0, 0, 0, 0, 1, 0], bool)
    h1, h2 = entity_embeddings(Tensor(words), e1, e2)
    np.testing.assert_allclose(h1.data, attention_pool(Tensor(words[1:3])).data, atol=1e-12)
    np.testing.assert_allclose(h2.data, words[4], atol=1e-12)
    with pytest.raises(MaskError):
        entity_embeddings(Tensor(words), e1, np.zeros(6, bool))


# ---------------------------------------------------------------- encoder


def encoder_params(d, f, seed=0, zero=False):
    p = ParameterSet(seed)
    p.add("encoder.pos", (16, d), "normal")
    for ln in ("ln1", "ln2"):
        p.add(f"encoder.0.{ln}.gamma", (d,), "ones")
        p.add(f"encoder.0.{ln}.beta", (d,), "zeros")
    for name, shape in (("attn.wq", (d, d)), ("attn.wk", (d, d)), ("attn.wv", (d, d)), ("attn.wo", (d, d)),
                        ("ffn.w1", (d, f)), ("ffn.w2", (f, d))):
        p.add(f"encoder.0.{name}", shape, "zeros" if zero else "xavier_uniform")
    for name, width in (("attn.bq", d), ("attn.bk", d), ("attn.bv", d), ("attn.bo", d), ("ffn.b1", f), ("ffn.b2", d)):
        p.add(f"encoder.0.{name}", (width,), "zeros")
    return p


def test_encoder_identity_with_zero_weights():
    p = encoder_params(8, 16, zero=True)
    x = np.random.default_rng(0).normal(size=(5, 8))
    out = contextual_encode(Tensor(x), np.ones(5, bool), p, n_layers=1, n_heads=2, max_words=16)
    np.testing.assert_allclose(out.data, x + p["encoder.pos"].data[:5], atol=1e-12)


@pytest.mark.parametrize("m", [1, 7, 16])
def test_encoder_shape(m):
    p = encoder_params(8, 16)
    out = contextual_encode(Tensor(np.ones((m, 8))), np.ones(m, bool), p, n_layers=1, n_heads=2, max_words=16)
    assert out.shape == (m, 8)


def test_encoder_ignores_padding_rows_and_rejects_long_inputs():
    p = encoder_params(8, 16, seed=4)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 8))
    mask = np.array([True, True, True, False])
    base = contextual_encode(Tensor(x), mask, p, n_layers=1, n_heads=2, max_words=16).data[:3]
    x[3] = 100.0
    again = contextual_encode(Tensor(x), mask, p, n_layers=1, n_heads=2, max_words=16).data[:3]
    np.testing.assert_allclose(base, again, atol=1e-12)
    with pytest.raises(LengthError):
        contextual_encode(Tensor(np.ones((17, 8))), np.ones(17, bool), p, n_layers=1, n_heads=2, max_words=16)


# ---------------------------------------------------------------- pair projection


def test_pair_projection():
    rng = np.random.default_rng(4)
    for d in (8, 64):
        h1, h2 = rand(rng, 2, d), rand(rng, 2, d)
        w = Tensor(np.vstack([np.eye(d), np.zeros((d, d))]))
        np.testing.assert_allclose(pair_projection(h1, h2, w, Tensor(np.zeros(d))).data, h1.data)
        out = pair_projection(h1, h2, rand(rng, 2 * d, d))
        assert out.shape == (2, d)
        out.sum().backward()
        assert np.abs(h1.grad).sum() > 0 and np.abs(h2.grad).sum() > 0


# ---------------------------------------------------------------- selection


def brute_force_top_k(weights, mask, k):
    live = [i for i in range(len(weights)) if mask[i]]
    ranked = sorted(live, key=lambda i: (-weights[i], i))
    return ranked[:k]


def test_selection_examples():
    np.testing.assert_array_equal(select_top_k(np.array([0.1, 0.5, 0.2, 0.2]), None, 2)[0], [1, 2])
    np.testing.assert_array_equal(select_top_k(np.array([0.3, 0.3, 0.4]), None, 9)[0], [2, 0, 1])
    np.testing.assert_array_equal(select_top_k(np.array([0.9, 0.05, 0.05]), [False, True, True], 1)[0], [1])
    with pytest.raises(ConfigError):
        select_top_k(np.ones(3), None, 0)
    with pytest.raises(EmptySupportError):
        select_top_k(np.ones(3), np.zeros(3, bool), 1)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 30), st.integers(1, 25), st.integers(0, 2**31))
def test_selection_matches_sort_oracle(m, k, seed):
    rng = np.random.default_rng(seed)
    # coarse weights so that ties occur often
    w = rng.integers(0, 5, size=m) / 4.0
    mask = rng.random(m) < 0.8
    mask[rng.integers(m)] = True
    got = select_top_k(w, mask, k)[0]
    assert got.tolist() == brute_force_top_k(w, mask, k)
    assert len(got) == min(k, mask.sum())
    assert np.all(np.diff(w[got]) <= 0)
    if k > 1:
        assert set(select_top_k(w, mask, k - 1)[0]) <= set(got)


def evidence_params(d, seed=0):
    p = ParameterSet(seed)
    for role in ROLES:
        p.add(f"evidence.query.{role}.w", (d, d))
        p.add(f"evidence.query.{role}.b", (d,), "zeros")
    for proj in ("k", "v", "o"):
        p.add(f"evidence.w{proj}", (d, d))
        p.add(f"evidence.b{proj}", (d,), "zeros")
    return p


def test_topk_with_k_at_least_m_attends_everywhere():
    rng = np.random.default_rng(5)
    d, m, h = 8, 5, 2
    p = evidence_params(d)
    ctx = Tensor(rng.normal(size=(1, m, d)))
    q = Tensor(rng.normal(size=(1, d)))
    keys, values = project_context(ctx, p, h)
    ev = topk_cross_attention(q, keys, values, np.ones((1, m), bool), 50,
                              p["evidence.query.e1.w"], None, p["evidence.wo"], None)
    assert sorted(ev.indices[0].tolist()) == list(range(m))
    # oracle: multi-head attention over all rows, concatenated, then the output map
    qp = (q.data @ p["evidence.query.e1.w"].data).reshape(h, d // h)
    kp = (ctx.data[0] @ p["evidence.wk"].data).reshape(m, h, d // h)
    vp = (ctx.data[0] @ p["evidence.wv"].data).reshape(m, h, d // h)
    heads = [softmax_np(qp[j] @ kp[:, j].T / math.sqrt(d // h)) @ vp[:, j] for j in range(h)]
    np.testing.assert_allclose(ev.h_k.data[0], np.concatenate(heads) @ p["evidence.wo"].data, atol=1e-12)
    np.testing.assert_allclose(ev.distribution.sum(axis=-1), 1.0, atol=1e-12)


def test_topk_errors():
    p = evidence_params(4)
    keys, values = project_context(Tensor(np.ones((1, 3, 4))), p, 2)
    args = (p["evidence.query.e1.w"], None, p["evidence.wo"], None)
    with pytest.raises(ConfigError):
        topk_cross_attention(Tensor(np.ones((1, 4))), keys, values, np.ones((1, 3), bool), 0, *args)
    with pytest.raises(EmptySupportError):
        topk_cross_attention(Tensor(np.ones((1, 4))), keys, values, np.zeros((1, 3), bool), 1, *args)


def test_roles_share_selection_when_degenerate():
    rng = np.random.default_rng(6)
    d = 8
    p = evidence_params(d)
    for role in ("e2", "pair"):
        p[f"evidence.query.{role}.w"].data = p["evidence.query.e1.w"].data.copy()
    h = Tensor(rng.normal(size=(1, d)))
    ctx = Tensor(rng.normal(size=(1, 9, d)))
    ev = pair_conditioned_evidence({r: h for r in ROLES}, ctx, np.ones((1, 9), bool), 3, p, 2)
    for role in ("e2", "pair"):
        np.testing.assert_array_equal(ev[role].indices[0], ev["e1"].indices[0])


def test_query_roles_can_disagree_and_pair_query_matters():
    rng = np.random.default_rng(7)
    d, m = 8, 12
    p = evidence_params(d, seed=2)
    ctx = Tensor(rng.normal(size=(1, m, d)) * 3)
    mask = np.ones((1, m), bool)
    queries = {r: Tensor(rng.normal(size=(1, d)) * 3) for r in ROLES}
    ev = pair_conditioned_evidence(queries, ctx, mask, 3, p, 2)
    sets = {r: frozenset(ev[r].indices[0].tolist()) for r in ROLES}
    assert len(set(sets.values())) > 1
    moved = dict(queries, pair=Tensor(queries["pair"].data + 1.0))
    ev2 = pair_conditioned_evidence(moved, ctx, mask, 3, p, 2)
    assert not np.allclose(ev2["pair"].distribution, ev["pair"].distribution)
    np.testing.assert_allclose(ev2["e1"].distribution, ev["e1"].distribution)
    ev1 = pair_conditioned_evidence(queries, ctx, mask, 1, p, 2)
    assert all(len(ev1[r].indices[0]) == 1 for r in ROLES)


# ---------------------------------------------------------------- gate and heads


def test_gate_saturation_and_interpolation():
    rng = np.random.default_rng(8)
    d, c = 6, 4
    h = Tensor(rng.normal(size=(1, d)))
    labels = Tensor(rng.normal(size=(c, d)))
    w = Tensor(rng.normal(size=(2 * d, d)) * 0.01)
    np.testing.assert_allclose(label_gate(h, labels, w, Tensor(np.full(d, 60.0))).data, h.data, atol=1e-12)
    closed = label_gate(h, labels, w, Tensor(np.full(d, -60.0))).data
    weights = softmax_np(labels.data @ h.data[0] / math.sqrt(d))
    np.testing.assert_allclose(closed[0], weights @ labels.data, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_gate_output_between_inputs(seed):
    rng = np.random.default_rng(seed)
    d = 5
    h = rng.normal(size=d)
    labels = rng.normal(size=(3, d))
    out = label_gate(Tensor(h[None]), Tensor(labels), Tensor(rng.normal(size=(2 * d, d))), Tensor(rng.normal(size=d))).data[0]
    mixed = softmax_np(labels @ h / math.sqrt(d)) @ labels
    assert np.all(out >= np.minimum(h, mixed) - 1e-12) and np.all(out <= np.maximum(h, mixed) + 1e-12)


def test_biaffine_examples():
    rng = np.random.default_rng(9)
    d, c = 4, 3
    h1, h2 = Tensor(rng.normal(size=(1, d))), Tensor(rng.normal(size=(1, d)))
    b = Tensor(rng.normal(size=c))
    zero = biaffine_head(h1, h2, Tensor(np.zeros((c, d + 1, d + 1))), Tensor(np.zeros((2 * d + 2, c))), b)
    np.testing.assert_allclose(zero.data[0], b.data)
    u = rng.normal(size=(c, d + 1, d + 1))
    w = rng.normal(size=(2 * d + 2, c))
    x1, x2 = np.append(h1.data[0], 1.0), np.append(h2.data[0], 1.0)
    expected = np.einsum("i,cij,j->c", x1, u, x2) + np.concatenate([x1, x2]) @ w + b.data
    np.testing.assert_allclose(biaffine_head(h1, h2, Tensor(u), Tensor(w), b).data[0], expected, atol=1e-12)
    swapped = biaffine_head(h2, h1, Tensor(u), Tensor(w), b).data
    assert not np.allclose(swapped, expected)


def head_params(d, f, c, rng):
    p = {}
    for head, width in (("context", 3 * d), ("fusion", 4 * d)):
        p[f"{head}.w1"] = rand(rng, width, f)
        p[f"{head}.b1"] = rand(rng, f)
        p[f"{head}.w2"] = rand(rng, f, c)
        p[f"{head}.b2"] = rand(rng, c)
    return p


def test_context_and_fusion_heads():
    rng = np.random.default_rng(10)
    d, f, c = 4, 6, 3
    p = head_params(d, f, c, rng)
    z = Tensor(np.zeros((1, d)))
    gelu_b1 = [0.5 * x * (1 + math.erf(x / math.sqrt(2))) for x in p["context.b1"].data]
    np.testing.assert_allclose(context_head(z, z, z, p).data[0],
                               np.array(gelu_b1) @ p["context.w2"].data + p["context.b2"].data, atol=1e-12)
    xs = [Tensor(rng.normal(size=(1, d))) for _ in range(4)]
    a = context_head(*xs[:3], p).data
    assert not np.allclose(a, context_head(xs[1], xs[0], xs[2], p).data)
    b = fusion_head(*xs, p).data
    assert not np.allclose(b, fusion_head(xs[0], xs[1], xs[3], xs[2], p).data)


def test_heads_gradient_check():
    rng = np.random.default_rng(11)
    d, c = 4, 3
    h1, h2 = rand(rng, 2, d), rand(rng, 2, d)
    u, w, b = rand(rng, c, d + 1, d + 1), rand(rng, 2 * d + 2, c), rand(rng, c)
    p = head_params(d, 5, c, rng)
    ev = [rand(rng, 2, d) for _ in range(3)]
    probe = rand(rng, c)
    named = {"h1": h1, "h2": h2, "u": u, "w": w, "ev0": ev[0], **p}

    def loss():
        total = (biaffine_head(h1, h2, u, w, b) * probe).sum()
        total = total + (context_head(*ev, p) * probe).sum()
        return total + (fusion_head(h1, h2, ev[0], ev[2], p) * probe).sum()

    errors = check_gradients(loss, named)
    assert max(errors.values()) < 1e-4, errors


def test_late_fusion_examples():
    l1, l2, l3 = (Tensor(np.array([v], float)) for v in ([1, 0], [0, 1], [1, 1]))
    _, probs = late_fusion([l1, l2, l3], Tensor(np.ones(3)))
    np.testing.assert_allclose(probs.data, [[0.5, 0.5]])
    _, probs = late_fusion([l1, l2, l3], Tensor(np.array([1.0, 0.0, 0.0])))
    np.testing.assert_allclose(probs.data, softmax_np(l1.data))


# ---------------------------------------------------------------- assembled network


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(d_model=10, n_heads=4).validate()
    with pytest.raises(ConfigError):
        ModelConfig(top_k=0).validate()
    with pytest.raises(ConfigError):
        ModelConfig(dropout=1.0).validate()
    cfg = ModelConfig(d_model=16, top_k=3)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"width": 3})


def test_parameters_reproducible_by_seed(small_corpus):
    _, vocab, _ = small_corpus
    a, b = tiny_model(vocab), tiny_model(vocab)
    for name, t in a.params.items():
        np.testing.assert_array_equal(t.data, b.params[name].data)
        assert t.requires_grad
    c = tiny_model(vocab, seed=2)
    assert not np.array_equal(a.params["pair.w"].data, c.params["pair.w"].data)


def test_forward_trace_contract(small_corpus):
    _, vocab, instances = small_corpus
    model = tiny_model(vocab, top_k=4)
    for inst in instances[:4]:
        t = model.forward(inst)
        m = inst.word_count
        assert t.word_reps.shape == (m, 8) and t.attention.shape == (3, m)
        np.testing.assert_allclose(t.attention.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(t.probabilities.sum(), 1.0, atol=1e-9)
        for role in ROLES:
            idx = t.topk_indices[role]
            assert len(idx) == min(4, m)
            assert np.all(np.diff(t.topk_weights[role]) <= 0)
            np.testing.assert_allclose(t.topk_weights[role], t.attention[ROLES.index(role), idx])
        again = model.forward(inst)
        np.testing.assert_array_equal(again.probabilities, t.probabilities)
    with pytest.raises(ConfigError):
        model.forward(instances[0], mode="infer")


def test_dropout_only_in_train_mode(small_corpus):
    _, vocab, instances = small_corpus
    model = tiny_model(vocab, dropout=0.5)
    a = model.forward(instances[0], "train").probabilities
    b = model.forward(instances[0], "train").probabilities
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(model.forward(instances[0]).probabilities,
                                  model.forward(instances[0]).probabilities)


def test_padding_changes_no_trace(small_corpus):
    _, vocab, instances = small_corpus
    model = tiny_model(vocab, top_k=3)
    plain = model.forward_batch(instances[:5]).traces
    padded = model.forward_batch(instances[:5], batch=Batch.collate(instances[:5], pad_subwords=7, pad_words=4)).traces
    for a, b in zip(plain, padded):
        for field in ("word_reps", "h_e1", "h_e2", "h_pair", "attention", "head_logits", "probabilities"):
            np.testing.assert_allclose(getattr(a, field), getattr(b, field), atol=1e-9)
        for role in ROLES:
            np.testing.assert_array_equal(a.topk_indices[role], b.topk_indices[role])


def test_late_fusion_degeneracy_in_model(small_corpus):
    _, vocab, instances = small_corpus
    model = tiny_model(vocab)
    model.params["fusion.late"].data = np.array([1.0, 0.0, 0.0])
    for t in model.forward_batch(instances).traces:
        assert np.argmax(t.probabilities) == np.argmax(t.head_logits[0])


def test_vocabulary_mismatch_rejected(small_corpus):
    _, vocab, instances = small_corpus
    model = PairTopKModel(ModelConfig(d_model=8, n_heads=2, ffn_hidden=8, vocab_size=len(vocab)), "other")
    with pytest.raises(CompatibilityError):
        model.check_instances(instances)


@pytest.mark.parametrize("seed", [0, 1])
def test_end_to_end_gradients_toy(toy, seed):
    model, instances = toy(seed)
    assert all(inst.word_count == 6 for inst in instances)
    rng = np.random.default_rng(seed)
    errors = check_gradients(lambda: model.loss(instances), dict(model.params.items()), max_coords=6, rng=rng)
    assert max(errors.values()) < 1e-4, {k: v for k, v in errors.items() if v >= 1e-4}
