"""Reverse-mode differentiation kit and the small trainable BEV mapping nets."""

from .tensor import (
    Tensor,
    add,
    as_tensor,
    bce_with_logits,
    concat,
    conv1x1,
    conv2d,
    div,
    exp,
    getitem,
    grad_check,
    log,
    matmul,
    mul,
    neg,
    powf,
    relu,
    reshape,
    select,
    sgd_step,
    sigmoid,
    softmax,
    stack,
    sub,
    tmean,
    transpose,
    tsum,
    zero_grads,
)

__all__ = [
    "Tensor",
    "add",
    "as_tensor",
    "bce_with_logits",
    "concat",
    "conv1x1",
    "conv2d",
    "div",
    "exp",
    "getitem",
    "grad_check",
    "log",
    "matmul",
    "mul",
    "neg",
    "powf",
    "relu",
    "reshape",
    "select",
    "sgd_step",
    "sigmoid",
    "softmax",
    "stack",
    "sub",
    "tmean",
    "transpose",
    "tsum",
    "zero_grads",
]
