# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled decoder kernels: batched Rodrigues and sparse linear blend skinning.

Mirrors ``handtok._kernels_py`` exactly; coefficients are evaluated in double
precision regardless of the array dtype.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt

cnp.import_array()

ctypedef fused real:
    float
    double

cdef double SMALL = 0.1


cdef inline void _coeffs(double a, double* A, double* B, double* C, double* D) noexcept nogil:
    cdef double a2 = a * a
    cdef double s, c, h
    if a < SMALL:
        A[0] = 1.0 - a2 / 6.0 * (1.0 - a2 / 20.0 * (1.0 - a2 / 42.0 * (1.0 - a2 / 72.0)))
        B[0] = 0.5 - a2 / 24.0 * (1.0 - a2 / 30.0 * (1.0 - a2 / 56.0 * (1.0 - a2 / 90.0)))
        C[0] = -1.0 / 3.0 + a2 * (1.0 / 30.0 + a2 * (-1.0 / 840.0 + a2 * (1.0 / 45360.0 - a2 / 3991680.0)))
        D[0] = -1.0 / 12.0 + a2 * (1.0 / 180.0 + a2 * (-1.0 / 6720.0 + a2 * (1.0 / 453600.0 - a2 / 47900160.0)))
    else:
        s = sin(a)
        c = cos(a)
        h = sin(0.5 * a)
        A[0] = s / a
        B[0] = 2.0 * h * h / a2
        C[0] = (a * c - s) / (a2 * a)
        D[0] = (a * s - 4.0 * h * h) / (a2 * a2)


def rodrigues_forward(real[:, ::1] r):
    """(N, 3) axis-angle -> (N, 3, 3) rotation matrices."""
    cdef Py_ssize_t n = r.shape[0], i
    dtype = np.float32 if real is float else np.float64
    out = np.empty((n, 3, 3), dtype=dtype)
    cdef real[:, :, ::1] R = out
    cdef double x, y, z, a, A, B, C, D
    cdef double k[3][3]
    cdef double k2[3][3]
    cdef int p, q, s
    with nogil:
        for i in range(n):
            x = r[i, 0]
            y = r[i, 1]
            z = r[i, 2]
            a = sqrt(x * x + y * y + z * z)
            _coeffs(a, &A, &B, &C, &D)
            k[0][0] = 0.0
            k[0][1] = -z
            k[0][2] = y
            k[1][0] = z
            k[1][1] = 0.0
            k[1][2] = -x
            k[2][0] = -y
            k[2][1] = x
            k[2][2] = 0.0
            for p in range(3):
                for q in range(3):
                    k2[p][q] = 0.0
                    for s in range(3):
                        k2[p][q] += k[p][s] * k[s][q]
            for p in range(3):
                for q in range(3):
                    R[i, p, q] = <real>((1.0 if p == q else 0.0) + A * k[p][q] + B * k2[p][q])
    return out


def rodrigues_backward(real[:, ::1] r, real[:, :, ::1] g):
    """Vector-Jacobian product of :func:`rodrigues_forward`."""
    cdef Py_ssize_t n = r.shape[0], i
    dtype = np.float32 if real is float else np.float64
    out = np.empty((n, 3), dtype=dtype)
    cdef real[:, ::1] gr = out
    cdef double x, y, z, a, A, B, C, D
    cdef double k[3][3]
    cdef double k2[3][3]
    cdef double G[3][3]
    cdef double e[3][3][3]
    cdef double gk, gk2, ge, gsym, v[3]
    cdef int p, q, s, j
    for j in range(3):
        for p in range(3):
            for q in range(3):
                e[j][p][q] = 0.0
    e[0][2][1] = 1.0
    e[0][1][2] = -1.0
    e[1][0][2] = 1.0
    e[1][2][0] = -1.0
    e[2][1][0] = 1.0
    e[2][0][1] = -1.0
    with nogil:
        for i in range(n):
            x = r[i, 0]
            y = r[i, 1]
            z = r[i, 2]
            v[0] = x
            v[1] = y
            v[2] = z
            a = sqrt(x * x + y * y + z * z)
            _coeffs(a, &A, &B, &C, &D)
            k[0][0] = 0.0
            k[0][1] = -z
            k[0][2] = y
            k[1][0] = z
            k[1][1] = 0.0
            k[1][2] = -x
            k[2][0] = -y
            k[2][1] = x
            k[2][2] = 0.0
            gk = 0.0
            gk2 = 0.0
            for p in range(3):
                for q in range(3):
                    G[p][q] = g[i, p, q]
                    k2[p][q] = 0.0
                    for s in range(3):
                        k2[p][q] += k[p][s] * k[s][q]
            for p in range(3):
                for q in range(3):
                    gk += G[p][q] * k[p][q]
                    gk2 += G[p][q] * k2[p][q]
            for j in range(3):
                ge = 0.0
                gsym = 0.0
                for p in range(3):
                    for q in range(3):
                        ge += G[p][q] * e[j][p][q]
                        for s in range(3):
                            gsym += G[p][q] * (e[j][p][s] * k[s][q] + k[p][s] * e[j][s][q])
                gr[i, j] = <real>(v[j] * (C * gk + D * gk2) + A * ge + B * gsym)
    return out


def skin_forward(real[:, :, :, ::1] A, real[:, :, ::1] p,
                 const long[::1] indptr, const long[::1] indices, const double[::1] values):
    """out[n, v] = p[n, v] + sum_k W[v, k] (R_k p[n, v] + t_k - p[n, v]) with W in CSR form."""
    cdef Py_ssize_t n = p.shape[0], nv = p.shape[1], b, vi, jj, kk
    dtype = np.float32 if real is float else np.float64
    out = np.empty((n, nv, 3), dtype=dtype)
    cdef real[:, :, ::1] o = out
    cdef double w, px, py, pz, dx, dy, dz
    with nogil:
        for b in range(n):
            for vi in range(nv):
                px = p[b, vi, 0]
                py = p[b, vi, 1]
                pz = p[b, vi, 2]
                dx = 0.0
                dy = 0.0
                dz = 0.0
                for jj in range(indptr[vi], indptr[vi + 1]):
                    kk = indices[jj]
                    w = values[jj]
                    dx += w * (A[b, kk, 0, 0] * px + A[b, kk, 0, 1] * py + A[b, kk, 0, 2] * pz + A[b, kk, 0, 3] - px)
                    dy += w * (A[b, kk, 1, 0] * px + A[b, kk, 1, 1] * py + A[b, kk, 1, 2] * pz + A[b, kk, 1, 3] - py)
                    dz += w * (A[b, kk, 2, 0] * px + A[b, kk, 2, 1] * py + A[b, kk, 2, 2] * pz + A[b, kk, 2, 3] - pz)
                o[b, vi, 0] = <real>(px + dx)
                o[b, vi, 1] = <real>(py + dy)
                o[b, vi, 2] = <real>(pz + dz)
    return out


def skin_backward(real[:, :, :, ::1] A, real[:, :, ::1] p, real[:, :, ::1] g,
                  const long[::1] indptr, const long[::1] indices, const double[::1] values):
    """Gradients of :func:`skin_forward` with respect to ``A`` and ``p``."""
    cdef Py_ssize_t n = p.shape[0], nv = p.shape[1], nk = A.shape[1], b, vi, jj, kk, i, j
    dtype = np.float32 if real is float else np.float64
    gA_arr = np.zeros((n, nk, 3, 4), dtype=np.float64)
    gp_arr = np.empty((n, nv, 3), dtype=dtype)
    cdef double[:, :, :, ::1] gA = gA_arr
    cdef real[:, :, ::1] gp = gp_arr
    cdef double w, gv[3], pv[3], acc[3]
    with nogil:
        for b in range(n):
            for vi in range(nv):
                for i in range(3):
                    gv[i] = g[b, vi, i]
                    pv[i] = p[b, vi, i]
                    acc[i] = gv[i]
                for jj in range(indptr[vi], indptr[vi + 1]):
                    kk = indices[jj]
                    w = values[jj]
                    for i in range(3):
                        for j in range(3):
                            gA[b, kk, i, j] += w * gv[i] * pv[j]
                            acc[j] += w * A[b, kk, i, j] * gv[i]
                        gA[b, kk, i, 3] += w * gv[i]
                        acc[i] -= w * gv[i]
                for i in range(3):
                    gp[b, vi, i] = <real>acc[i]
    return gA_arr.astype(dtype, copy=False), gp_arr
