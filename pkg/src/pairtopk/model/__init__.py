from pairtopk.model.layers import (
    ROLES,
    Evidence,
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
from pairtopk.model.network import HEADS, Batch, BatchOutput, ForwardTrace, ModelConfig, PairTopKModel
