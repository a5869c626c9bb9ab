from .archive import SCHEMA_VERSION, ArchiveError, load_archive, save_archive
from .gradcheck import grad_check, numeric_grad
from .optim import (
    AdamState,
    UninitializedGradientError,
    adam_step,
    clip_grad_norm,
    global_grad_norm,
    zero_grads,
)
from .tensor import (
    ContractError,
    DegenerateMaskError,
    DimensionError,
    Tape,
    TapeConsumedError,
    Tensor,
    TensorError,
    absolute,
    active_tape,
    add,
    as_tensor,
    backward,
    concat,
    custom_op,
    default_dtype,
    div,
    embedding_lookup,
    exp,
    getitem,
    layer_norm,
    matmul,
    mean,
    mul,
    pointwise,
    relu,
    reshape,
    sigmoid,
    softmax_last_dim,
    square,
    sub,
    take_last,
    tanh,
    transpose,
    tsum,
    where,
    wide_precision,
)
