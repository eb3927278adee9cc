import numpy as np
import pytest

from pairtopk.corpus import Document, PairExample, Vocabulary, build_context_window
from pairtopk.model import ModelConfig, PairTopKModel


def make_toy(seed: int, n_instances: int = 3, n_labels: int = 3):
    """Two-word documents with both words marked as entities: six window words each."""
    rng = np.random.default_rng(seed)
    pool = ["ab", "cdefgh", "ij", "klmnop", "qr", "stuv"]
    docs = [Document.from_text(f"t{i}", " ".join(rng.choice(pool, 2))) for i in range(n_instances)]
    vocab = Vocabulary.build([d.words for d in docs])
    instances = [
        build_context_window(d, PairExample(f"t{i}#0", d.doc_id, (0, 1), (1, 2), "a", "train"), 4, vocab,
                             int(rng.integers(n_labels)))
        for i, d in enumerate(docs)
    ]
    model = PairTopKModel(ModelConfig(d_model=8, n_heads=2, ffn_hidden=8, dropout=0.0, top_k=2,
                                      n_labels=n_labels, vocab_size=len(vocab), max_words=8, seed=seed))
    # move the zero-initialized branches off their kink-free origin so every path is exercised
    for _, t in model.params.items():
        t.data = t.data + rng.normal(scale=0.2, size=t.shape)
    return model, instances


@pytest.fixture
def toy():
    return make_toy
