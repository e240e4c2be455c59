"""Differentiable-computation substrate: autodiff, layers, optimizer."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError, Tensor, no_grad, scope
from .nn import LayerNorm, Linear, Module, cross_entropy, dropout, xavier_uniform
from .optim import OptimizerState, adam_step, learning_rate


def value_and_grad(computation: Callable[[], Tensor], parameters: dict[str, Tensor]) -> tuple[float, dict[str, np.ndarray]]:
    """Evaluate a scalar ``computation`` and its gradient for each named parameter.

    ``computation`` takes no arguments and closes over the parameter tensors.
    Parameters that do not influence the output get a zero gradient.
    """
    for p in parameters.values():
        p.grad = None
        p.requires_grad = True
    out = computation()
    if not isinstance(out, Tensor) or out.size != 1:
        shape = getattr(out, "shape", type(out).__name__)
        raise ValueError(f"computation must return a scalar Tensor, got {shape}")
    out.backward()
    grads = {}
    for name, p in parameters.items():
        grads[name] = p.grad if p.grad is not None else np.zeros_like(p.data)
        p.grad = None
    return float(out.data), grads


__all__ = [
    "ad", "Tensor", "NonFiniteError", "no_grad", "scope", "value_and_grad",
    "Module", "Linear", "LayerNorm", "dropout", "cross_entropy", "xavier_uniform",
    "OptimizerState", "adam_step", "learning_rate",
]
