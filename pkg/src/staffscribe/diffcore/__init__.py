"""Minimal differentiable-tensor substrate for the transcription models."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .nnops import conv2d, lstm_step, maxpool2d, rnn_step
from .tensor import (
    ShapeError,
    Tensor,
    add,
    affine,
    concat,
    from_op,
    gather_columns,
    index_axis0,
    leaky_relu,
    log_softmax,
    logsigmoid,
    matmul,
    mean_,
    mul,
    reshape,
    scale,
    sigmoid,
    softmax,
    stack,
    sum_,
    tanh,
    tensor,
    transpose,
)

__all__ = [
    "CheckpointError",
    "GradCheckReport",
    "ShapeError",
    "Tensor",
    "add",
    "affine",
    "concat",
    "conv2d",
    "from_op",
    "gather_columns",
    "grad_check",
    "index_axis0",
    "leaky_relu",
    "load_checkpoint",
    "log_softmax",
    "logsigmoid",
    "lstm_step",
    "matmul",
    "maxpool2d",
    "mean_",
    "mul",
    "reshape",
    "rnn_step",
    "save_checkpoint",
    "scale",
    "sigmoid",
    "softmax",
    "stack",
    "sum_",
    "tanh",
    "tensor",
    "transpose",
]
