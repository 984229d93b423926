"""Minimal tensor library: values, reverse-mode graph, operators, AdamW."""

from .core import DTYPES, Graph, Tensor, as_tensor, backward, current_graph, parameter
from .ops import OP_KINDS, forward_op
from .optim import AdamW, OptimizerState, adamw_step

__all__ = [
    "DTYPES",
    "Graph",
    "Tensor",
    "as_tensor",
    "backward",
    "current_graph",
    "parameter",
    "OP_KINDS",
    "forward_op",
    "AdamW",
    "OptimizerState",
    "adamw_step",
]
