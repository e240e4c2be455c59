"""Central finite-difference checks, independent of the reverse-mode path."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import Tensor, no_grad


def numerical_directional(fn: Callable[[], Tensor], params: dict[str, Tensor],
                          direction: dict[str, np.ndarray], step: float = 1e-6) -> float:
    """(f(p + h d) - f(p - h d)) / 2h, evaluated with the graph disabled."""
    saved = {k: p.data.copy() for k, p in params.items()}
    try:
        with no_grad():
            for k, p in params.items():
                p.data = saved[k] + step * direction[k]
            f_plus = float(fn().data)
            for k, p in params.items():
                p.data = saved[k] - step * direction[k]
            f_minus = float(fn().data)
    finally:
        for k, p in params.items():
            p.data = saved[k]
    return (f_plus - f_minus) / (2.0 * step)


def numerical_gradient(fn: Callable[[], Tensor], x: Tensor, step: float = 1e-6) -> np.ndarray:
    """Elementwise central differences of a scalar ``fn`` with respect to ``x``."""
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    out = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(fn().data)
            flat[i] = orig - step
            f_minus = float(fn().data)
            flat[i] = orig
            out[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_error(a: float, b: float, floor: float = 1e-12) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_directions(fn: Callable[[], Tensor], params: dict[str, Tensor], grads: dict[str, np.ndarray],
                     n_directions: int, rng: np.random.Generator, step: float = 1e-6) -> list[float]:
    """Relative errors between ``<grad, d>`` and central differences along random unit directions."""
    errors = []
    for _ in range(n_directions):
        direction = {k: rng.standard_normal(p.shape) for k, p in params.items()}
        norm = np.sqrt(sum(float((d * d).sum()) for d in direction.values()))
        direction = {k: d / norm for k, d in direction.items()}
        analytic = sum(float((grads[k] * direction[k]).sum()) for k in params)
        numeric = numerical_directional(fn, params, direction, step)
        errors.append(relative_error(analytic, numeric))
    return errors
