"""Dense tensor engine: autodiff, layers, optimizers, gradient checks."""

from . import gradcheck, nn, ops, optim
from .tensor import Tensor, concat, embedding_lookup, no_grad, stack, take_rows

__all__ = [
    "Tensor",
    "concat",
    "stack",
    "take_rows",
    "embedding_lookup",
    "no_grad",
    "nn",
    "ops",
    "optim",
    "gradcheck",
]
