"""Minimal matrix autodiff kernel with RMSProp, grad checking and checkpoints."""

from .autodiff import (
    CHECK_FINITE,
    Node,
    Param,
    ShapeError,
    Tape,
    activation,
    add,
    add_row,
    collect_params,
    concat_rows,
    constant,
    matmul,
    mul,
    reduce,
    reshape,
    scale,
    sub,
    take_rows,
    transpose,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import GradReport, grad_check
from .optim import rmsprop_step

__all__ = [
    "CHECK_FINITE",
    "Node",
    "Param",
    "ShapeError",
    "Tape",
    "activation",
    "add",
    "add_row",
    "collect_params",
    "constant",
    "matmul",
    "mul",
    "reduce",
    "reshape",
    "scale",
    "sub",
    "take_rows",
    "concat_rows",
    "transpose",
    "CheckpointError",
    "load_checkpoint",
    "save_checkpoint",
    "GradReport",
    "grad_check",
    "rmsprop_step",
]
