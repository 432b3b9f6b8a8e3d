"""Minimal dense tensors with tape-based reverse-mode differentiation."""
from . import tensor as ops
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import GradcheckResult, gradcheck, rel_error
from .optim import Adam, adam_step, clip_by_global_norm, global_norm
from .tensor import (
    BackwardError,
    NonFiniteError,
    Tape,
    Tensor,
    add,
    as_tensor,
    clip,
    concat,
    default_dtype,
    div,
    elementwise,
    exp,
    get_default_dtype,
    getitem,
    layernorm,
    linear_recurrence,
    selective_scan,
    log,
    matmul,
    maximum,
    mean,
    minimum,
    mul,
    neg,
    record_kinks,
    reduce,
    relu,
    reshape,
    set_default_dtype,
    sigmoid,
    softmax,
    softplus,
    square,
    stack,
    sub,
    tanh,
    transpose,
    unbroadcast,
)

__all__ = [name for name in dir() if not name.startswith("_")]
