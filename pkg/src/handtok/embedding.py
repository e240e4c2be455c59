"""Visual-token embedding: graph-conv gesture state + sinusoidal time + chirality."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ad
from .numerics.autodiff import Tensor
from .numerics.nn import Linear, Module, parameter, xavier_uniform
from .posedata import CROP, FINGER_SLICES, N_JOINTS


@dataclass(frozen=True)
class HandGraph:
    edges: tuple[tuple[int, int], ...]
    physical: tuple[tuple[int, int], ...]
    adjacency: np.ndarray        # (21, 21) 0/1, no self loops
    normalized: np.ndarray       # D^-1/2 (A + I) D^-1/2

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]


def build_hand_graph() -> HandGraph:
    """Physical bones (a tree) plus same-level links between neighbouring fingers."""
    physical = []
    for sl in FINGER_SLICES:
        chain = [0] + list(range(sl.start, sl.stop))
        physical += list(zip(chain[:-1], chain[1:]))
    symmetric = []
    for f in range(4):
        a, b = FINGER_SLICES[f], FINGER_SLICES[f + 1]
        symmetric += [(a.start + i, b.start + i) for i in range(1, 4)]
    edges = tuple(physical + symmetric)
    A = np.zeros((N_JOINTS, N_JOINTS))
    for i, j in edges:
        A[i, j] = A[j, i] = 1.0
    Ah = A + np.eye(N_JOINTS)
    dinv = 1.0 / np.sqrt(Ah.sum(1))
    return HandGraph(edges, tuple(physical), A, dinv[:, None] * Ah * dinv[None, :])


class GestureEmbedding(Module):
    """Two graph convolutions ``ReLU(A_hat H W)`` then finger pooling and a linear map to ``d``.

    The result is multiplied by ``sqrt(d)`` (the usual transformer token-embedding
    scale) so pose variation is not swamped by the unit-amplitude position code.
    """

    def __init__(self, d: int, rng: np.random.Generator, dtype=np.float32, channels=(64, 128),
                 graph: HandGraph | None = None):
        self._graph = graph or build_hand_graph()
        self._adj = self._graph.normalized.astype(dtype)
        widths = (2,) + tuple(channels)
        self.gcn = [parameter(xavier_uniform(rng, a, b, dtype)) for a, b in zip(widths[:-1], widths[1:])]
        self.proj = Linear(6 * widths[-1], d, rng, dtype)
        pool = np.zeros((6, N_JOINTS), dtype=dtype)
        pool[0, 0] = 1.0
        for f, sl in enumerate(FINGER_SLICES):
            pool[f + 1, sl] = 1.0 / (sl.stop - sl.start)
        self._pool = pool
        self._out_scale = float(np.sqrt(d))

    def named_parameters(self, prefix: str = ""):
        for i, w in enumerate(self.gcn):
            yield f"{prefix}gcn.{i}", w
        yield from self.proj.named_parameters(prefix + "proj.")

    def graph_conv(self, h: Tensor, layer: int) -> Tensor:
        return ad.relu(ad.matmul(ad.matmul(self._adj, h), self.gcn[layer]))

    def __call__(self, joints: Tensor) -> Tensor:
        """``joints``: ``(..., 21, 2)`` already rescaled to [-1, 1]."""
        if not np.isfinite(joints.data).all():
            raise ValueError("gesture embedding received non-finite joint coordinates")
        lead = joints.shape[:-2]
        h = joints.reshape((-1, N_JOINTS, 2))
        for layer in range(len(self.gcn)):
            h = self.graph_conv(h, layer)
        pooled = ad.matmul(self._pool, h)  # (N, 6, C)
        out = self.proj(pooled.reshape((pooled.shape[0], -1))) * self._out_scale
        return out.reshape(lead + (out.shape[-1],))


def to_unit_coords(crop_joints: np.ndarray) -> np.ndarray:
    """[0, 256] crop pixels -> [-1, 1]."""
    return np.asarray(crop_joints) / (CROP / 2) - 1.0


def temporal_embed(time_index, d: int) -> np.ndarray:
    """Sinusoidal position code; ``time_index`` may be an int or an array."""
    t = np.asarray(time_index, dtype=np.float64)
    if (t < 0).any():
        raise ValueError("time index must be non-negative")
    i = np.arange(0, d, 2)
    freq = 1.0 / 10000.0 ** (i / d)
    angles = t[..., None] * freq
    out = np.zeros(t.shape + (d,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles[..., : d // 2])
    return out


class ChiralityEmbedding(Module):
    """Lookup table with one learned row per hand (0 = left, 1 = right)."""

    def __init__(self, d: int, rng: np.random.Generator, dtype=np.float32):
        self.table = parameter(rng.normal(0.0, 0.02, size=(2, d)).astype(dtype))

    def __call__(self, chirality: np.ndarray) -> Tensor:
        return self.table[np.asarray(chirality, dtype=np.int64)]


def token_layout(T: int) -> tuple[np.ndarray, np.ndarray]:
    """(time index, chirality) per token for the order [left 0..T-1, right 0..T-1]."""
    times = np.concatenate([np.arange(T), np.arange(T)])
    hands = np.concatenate([np.zeros(T, dtype=np.int64), np.ones(T, dtype=np.int64)])
    return times, hands


class TokenEmbedder(Module):
    """F0 = gesture + temporal + chirality for every token."""

    def __init__(self, d: int, rng: np.random.Generator, dtype=np.float32, channels=(64, 128)):
        self.d = d
        self._dtype = dtype
        self.gesture = GestureEmbedding(d, rng, dtype, channels)
        self.chirality = ChiralityEmbedding(d, rng, dtype)

    def __call__(self, crop_joints: np.ndarray | Tensor) -> Tensor:
        """``crop_joints``: ``(B, 2T, 21, 2)`` in crop pixels, tokens ordered left-then-right."""
        if isinstance(crop_joints, Tensor):
            unit = crop_joints * (1.0 / (CROP / 2)) - 1.0
        else:
            unit = Tensor(to_unit_coords(crop_joints).astype(self._dtype))
        n_tokens = unit.shape[-3]
        if n_tokens % 2:
            raise ValueError(f"expected an even token count (two hands), got {n_tokens}")
        T = n_tokens // 2
        times, hands = token_layout(T)
        f_p = self.gesture(unit)
        f_o = temporal_embed(times, self.d).astype(self._dtype)
        f_h = self.chirality(hands)
        return f_p + f_o + f_h


def compose_tokens(left: np.ndarray, right: np.ndarray, embedder: TokenEmbedder) -> Tensor:
    """Stack per-hand crop joints ``(T, 21, 2)`` (or batched) and embed to ``(..., 2T, d)``."""
    left = np.asarray(left)
    right = np.asarray(right)
    if left.shape != right.shape:
        raise ValueError(f"per-hand token counts differ: {left.shape} vs {right.shape}")
    return embedder(np.concatenate([left, right], axis=-3))
