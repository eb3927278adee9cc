from pairtopk.tensor.checkpoint import load_checkpoint, save_checkpoint
from pairtopk.tensor.core import (
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    div,
    exp,
    getitem,
    log,
    matmul,
    mean,
    mul,
    neg,
    power,
    reshape,
    sigmoid,
    stack,
    sub,
    swapaxes,
    tanh,
    transpose,
    tsum,
    where,
)
from pairtopk.tensor.functional import (
    LAYERNORM_EPS,
    cross_entropy,
    dropout,
    embedding_lookup,
    gelu,
    layernorm,
    linear,
    log_softmax,
    scaled_dot_attention,
    softmax,
)
from pairtopk.tensor.optim import OptimizerState, adamw_step
from pairtopk.tensor.params import InitSpec, ParameterSet
from pairtopk.tensor.gradcheck import check_gradients, numerical_gradient, relative_error
