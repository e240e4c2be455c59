"""Post-norm transformer encoder over the 2T visual tokens."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ad
from .numerics.autodiff import NonFiniteError, Tensor
from .numerics.nn import LayerNorm, Linear, Module, dropout


@dataclass
class EncoderConfig:
    layers: int = 3
    heads: int = 4
    d: int = 256
    ffn: int = 1024
    dropout: float = 0.1

    def validate(self) -> None:
        if self.layers < 1:
            raise ValueError(f"encoder needs at least one layer, got {self.layers}")
        if self.heads < 1 or self.d % self.heads:
            raise ValueError(f"model dim {self.d} is not divisible by {self.heads} heads")
        if self.ffn < 1:
            raise ValueError(f"feed-forward dim must be positive, got {self.ffn}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.dropout}")


def attention(q: Tensor, k: Tensor, v: Tensor, return_weights: bool = False):
    """Scaled dot-product attention over the second-to-last axis.

    ``q``: ``(..., n, dk)``, ``k``: ``(..., m, dk)``, ``v``: ``(..., m, dv)``.
    """
    if q.shape[-1] != k.shape[-1]:
        raise ValueError(f"query/key width mismatch: {q.shape[-1]} vs {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError(f"key/value length mismatch: {k.shape[-2]} vs {v.shape[-2]}")
    scores = ad.matmul(q, k.swapaxes(-1, -2)) * (1.0 / np.sqrt(q.shape[-1]))
    weights = ad.softmax(scores, axis=-1)
    out = ad.matmul(weights, v)
    return (out, weights) if return_weights else out


class MultiHeadAttention(Module):
    def __init__(self, d: int, heads: int, rng: np.random.Generator, dtype=np.float32):
        if d % heads:
            raise ValueError(f"model dim {d} is not divisible by {heads} heads")
        self._heads = heads
        self.q = Linear(d, d, rng, dtype)
        self.k = Linear(d, d, rng, dtype)
        self.v = Linear(d, d, rng, dtype)
        self.out = Linear(d, d, rng, dtype)

    def _split(self, x: Tensor) -> Tensor:
        *lead, n, d = x.shape
        x = x.reshape(tuple(lead) + (n, self._heads, d // self._heads))
        return x.swapaxes(-2, -3)  # (..., h, n, dk)

    def __call__(self, x: Tensor, return_weights: bool = False):
        q, k, v = (self._split(proj(x)) for proj in (self.q, self.k, self.v))
        ctx, weights = attention(q, k, v, return_weights=True)
        ctx = ctx.swapaxes(-2, -3)
        ctx = ctx.reshape(ctx.shape[:-2] + (ctx.shape[-2] * ctx.shape[-1],))
        y = self.out(ctx)
        return (y, weights) if return_weights else y


class EncoderLayer(Module):
    """``x <- LN(x + MHA(x))``, then ``x <- LN(x + FFN(x))``."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float32):
        self.attn = MultiHeadAttention(cfg.d, cfg.heads, rng, dtype)
        self.norm1 = LayerNorm(cfg.d, dtype)
        self.ff1 = Linear(cfg.d, cfg.ffn, rng, dtype)
        self.ff2 = Linear(cfg.ffn, cfg.d, rng, dtype)
        self.norm2 = LayerNorm(cfg.d, dtype)
        self._rate = cfg.dropout

    def __call__(self, x: Tensor, rng: np.random.Generator | None = None, return_weights: bool = False):
        a, weights = self.attn(x, return_weights=True)
        x = self.norm1(x + dropout(a, self._rate, rng))
        f = self.ff2(ad.relu(self.ff1(x)))
        x = self.norm2(x + dropout(f, self._rate, rng))
        return (x, weights) if return_weights else x


class Encoder(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.layers = [EncoderLayer(cfg, rng, dtype) for _ in range(cfg.layers)]

    def __call__(self, x: Tensor, rng: np.random.Generator | None = None, return_weights: bool = False):
        """``rng=None`` disables dropout (evaluation mode)."""
        if not np.isfinite(x.data).all():
            raise NonFiniteError("input", "encoder input")
        all_weights = []
        for i, layer in enumerate(self.layers):
            with ad.scope(f"encoder layer {i}"):
                x, w = layer(x, rng, return_weights=True)
            all_weights.append(w)
        return (x, all_weights) if return_weights else x
