"""Adam with coupled L2 weight decay and a step-decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


def learning_rate(epoch: int, base_lr: float = 1e-3, decay: float = 0.1, interval: int = 20) -> float:
    """Step schedule: ``base_lr * decay ** (epoch // interval)``."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return base_lr * decay ** (epoch // interval)


@dataclass
class OptimizerState:
    base_lr: float = 1e-3
    decay: float = 0.1
    decay_interval: int = 20
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warmup_steps: int = 0
    step: int = 0
    lr: float = 1e-3
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def set_epoch(self, epoch: int) -> float:
        self.lr = learning_rate(epoch, self.base_lr, self.decay, self.decay_interval)
        return self.lr

    def hyper(self) -> dict:
        return {
            "base_lr": self.base_lr, "decay": self.decay, "decay_interval": self.decay_interval,
            "weight_decay": self.weight_decay, "beta1": self.beta1, "beta2": self.beta2,
            "eps": self.eps, "warmup_steps": self.warmup_steps, "step": self.step, "lr": self.lr,
        }


def adam_step(state: OptimizerState, params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> dict[str, Tensor]:
    """Update ``params`` in place and return them.

    Weight decay is folded into the gradient before the moment updates
    (classic L2, not decoupled).  With ``warmup_steps`` set, the scheduled rate
    is scaled by ``min(1, step / warmup_steps)``.
    """
    for name in grads:
        if name not in params:
            raise KeyError(f"gradient for unknown parameter '{name}'")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    lr = state.lr * min(1.0, t / state.warmup_steps) if state.warmup_steps > 0 else state.lr
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter '{name}' {p.shape}")
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / corr1
        v_hat = v / corr2
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype, copy=False)
    return params
