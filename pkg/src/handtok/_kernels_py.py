"""Pure-numpy versions of the compiled decoder kernels (same signatures)."""

from __future__ import annotations

import numpy as np

_SMALL = 0.1

# dK/dr_i for the cross-product matrix K(r)
_E = np.zeros((3, 3, 3))
_E[0, 2, 1], _E[0, 1, 2] = 1.0, -1.0
_E[1, 0, 2], _E[1, 2, 0] = 1.0, -1.0
_E[2, 1, 0], _E[2, 0, 1] = 1.0, -1.0


def _coeffs(a: np.ndarray):
    a2 = a * a
    small = a < _SMALL
    safe = np.where(small, 1.0, a)
    s, c, h = np.sin(safe), np.cos(safe), np.sin(0.5 * safe)
    A = np.where(small, 1.0 - a2 / 6.0 * (1.0 - a2 / 20.0 * (1.0 - a2 / 42.0 * (1.0 - a2 / 72.0))), s / safe)
    B = np.where(small, 0.5 - a2 / 24.0 * (1.0 - a2 / 30.0 * (1.0 - a2 / 56.0 * (1.0 - a2 / 90.0))),
                 2.0 * h * h / safe**2)
    C = np.where(small, -1.0 / 3.0 + a2 * (1.0 / 30.0 + a2 * (-1.0 / 840.0 + a2 * (1.0 / 45360.0 - a2 / 3991680.0))),
                 (safe * c - s) / safe**3)
    D = np.where(small, -1.0 / 12.0 + a2 * (1.0 / 180.0 + a2 * (-1.0 / 6720.0 + a2 * (1.0 / 453600.0 - a2 / 47900160.0))),
                 (safe * s - 4.0 * h * h) / safe**4)
    return A, B, C, D


def _cross(r: np.ndarray) -> np.ndarray:
    k = np.zeros(r.shape[:-1] + (3, 3))
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    k[..., 0, 1], k[..., 0, 2] = -z, y
    k[..., 1, 0], k[..., 1, 2] = z, -x
    k[..., 2, 0], k[..., 2, 1] = -y, x
    return k


def rodrigues_forward(r: np.ndarray) -> np.ndarray:
    r64 = r.astype(np.float64)
    a = np.sqrt((r64 * r64).sum(-1))
    A, B, _, _ = _coeffs(a)
    k = _cross(r64)
    R = np.eye(3) + A[:, None, None] * k + B[:, None, None] * (k @ k)
    return R.astype(r.dtype)


def rodrigues_backward(r: np.ndarray, g: np.ndarray) -> np.ndarray:
    r64 = r.astype(np.float64)
    G = g.astype(np.float64)
    a = np.sqrt((r64 * r64).sum(-1))
    A, B, C, D = _coeffs(a)
    k = _cross(r64)
    gk = (G * k).sum((-2, -1))
    gk2 = (G * (k @ k)).sum((-2, -1))
    ge = np.einsum("npq,jpq->nj", G, _E)
    gsym = np.einsum("npq,jps,nsq->nj", G, _E, k) + np.einsum("npq,nps,jsq->nj", G, k, _E)
    out = r64 * (C * gk + D * gk2)[:, None] + A[:, None] * ge + B[:, None] * gsym
    return out.astype(r.dtype)


def _dense(indptr, indices, values, nv: int, nk: int) -> np.ndarray:
    W = np.zeros((nv, nk))
    rows = np.repeat(np.arange(nv), np.diff(indptr))
    W[rows, indices] = values
    return W


def skin_forward(A: np.ndarray, p: np.ndarray, indptr, indices, values) -> np.ndarray:
    W = _dense(indptr, indices, values, p.shape[1], A.shape[1]).astype(p.dtype)
    rp = np.einsum("nkij,nvj->nvki", A[..., :3], p) + A[:, None, :, :, 3] - p[:, :, None, :]
    return p + np.einsum("vk,nvki->nvi", W, rp)


def skin_backward(A: np.ndarray, p: np.ndarray, g: np.ndarray, indptr, indices, values):
    W = _dense(indptr, indices, values, p.shape[1], A.shape[1]).astype(p.dtype)
    gA = np.empty(A.shape, dtype=p.dtype)
    wg = np.einsum("vk,nvi->nvki", W, g)
    gA[..., :3] = np.einsum("nvki,nvj->nkij", wg, p)
    gA[..., 3] = wg.sum(1)
    gp = g + np.einsum("nvki,nkij->nvj", wg, A[..., :3]) - wg.sum(2)
    return gA, gp
