"""Minimal reverse-mode differentiation for the density estimator."""

from . import special
from .tape import (
    NonFiniteError,
    ParamStore,
    ShapeError,
    Tape,
    Tensor,
    adam_step,
    add,
    add_bias_row,
    concat_rows,
    digamma,
    lgamma,
    log,
    matmul,
    mean,
    mul,
    scale,
    segment_mean,
    softplus,
    sparse_aggregate,
    sub,
    sum,
    take_columns,
    tanh,
)

__all__ = [
    "NonFiniteError",
    "ParamStore",
    "ShapeError",
    "Tape",
    "Tensor",
    "adam_step",
    "add",
    "add_bias_row",
    "concat_rows",
    "digamma",
    "lgamma",
    "log",
    "matmul",
    "mean",
    "mul",
    "scale",
    "segment_mean",
    "softplus",
    "sparse_aggregate",
    "special",
    "sub",
    "sum",
    "take_columns",
    "tanh",
]
