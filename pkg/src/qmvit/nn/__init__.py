from .tensor import Tensor, as_tensor, concat, parameter, vjp
from .functional import (
    ShapeError,
    classical_attention,
    conv2d,
    cross_entropy,
    ffn,
    gelu,
    layer_norm,
    linear,
    log_softmax,
    pi_tanh,
    pool,
    relu,
    softmax,
)
from .optim import AdamState, adam_step
