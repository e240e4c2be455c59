"""Differentiable wrappers around the decoder kernels.

The compiled extension is used when it imports; otherwise (or when
``HANDTOK_PURE_PYTHON=1``) the numpy implementation takes over.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py
from .numerics import ad
from .numerics.autodiff import Tensor

if os.environ.get("HANDTOK_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"


def use_backend(name: str) -> None:
    """Switch between ``"compiled"`` and ``"python"`` at runtime (benchmarks, tests)."""
    global _impl, BACKEND
    if name == "python":
        _impl, BACKEND = _kernels_py, "python"
    elif name == "compiled":
        from . import _kernels  # type: ignore[attr-defined]

        _impl, BACKEND = _kernels, "compiled"
    else:
        raise ValueError(f"unknown backend {name!r}")


def rodrigues(r: Tensor) -> Tensor:
    """Axis-angle vectors ``(..., 3)`` to rotation matrices ``(..., 3, 3)``."""
    lead = r.shape[:-1]
    flat = np.ascontiguousarray(r.data.reshape(-1, 3))
    R = _impl.rodrigues_forward(flat).reshape(lead + (3, 3))

    def back(g):
        gf = np.ascontiguousarray(g.reshape(-1, 3, 3), dtype=flat.dtype)
        return (_impl.rodrigues_backward(flat, gf).reshape(r.shape),)

    return ad.custom(R, (r,), back, "rodrigues")


class SkinningWeights:
    """CSR view of an ``(N_v, K)`` skinning matrix, dropping exact zeros."""

    def __init__(self, weights: np.ndarray):
        W = np.asarray(weights, dtype=np.float64)
        self.shape = W.shape
        mask = W != 0.0
        self.indptr = np.concatenate([[0], np.cumsum(mask.sum(1))]).astype(np.int64)
        self.indices = np.nonzero(mask)[1].astype(np.int64)
        self.values = W[mask].astype(np.float64)

    def subset(self, rows: np.ndarray) -> "SkinningWeights":
        dense = np.zeros(self.shape)
        r = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
        dense[r, self.indices] = self.values
        return SkinningWeights(dense[rows])


def skin(transforms: Tensor, points: Tensor, weights: SkinningWeights) -> Tensor:
    """Blend per-joint rigid transforms ``(N, K, 3, 4)`` over points ``(N, V, 3)``."""
    A = np.ascontiguousarray(transforms.data)
    p = np.ascontiguousarray(points.data, dtype=A.dtype)
    if A.shape[1] != weights.shape[1] or p.shape[1] != weights.shape[0]:
        raise ValueError(f"skinning shapes disagree: transforms {A.shape}, points {p.shape}, weights {weights.shape}")
    out = _impl.skin_forward(A, p, weights.indptr, weights.indices, weights.values)

    def back(g):
        gA, gp = _impl.skin_backward(A, p, np.ascontiguousarray(g, dtype=A.dtype),
                                     weights.indptr, weights.indices, weights.values)
        return gA, gp

    return ad.custom(out, (transforms, points), back, "skin")
