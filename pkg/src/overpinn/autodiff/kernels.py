"""Hot kernels for propagating truncated jets through tanh.

A jet array has shape ``(M, P)``: row 0 holds values, row ``m`` holds the
partial derivative for multi-index ``m``.  Composition with a scalar
function uses the multivariate chain rule written as a term table (see
:func:`overpinn.autodiff.jets.composition_table`): each term adds
``coef * f^(n)(a_0) * a[f_1] * ... * a[f_n]`` to its target row.

Numba versions are used unless ``OVERPINN_NUMBA=0`` is set in the
environment; :func:`set_backend` switches at runtime.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

_backend = "numba" if numba is not None and os.environ.get("OVERPINN_NUMBA", "1") != "0" else "numpy"


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(name)
    if name == "numba" and numba is None:
        raise RuntimeError("numba is not installed")
    _backend = name


def get_backend() -> str:
    return _backend


# numpy path ----------------------------------------------------------------

def _tanh_derivs(a0):
    y = np.tanh(a0)
    s1 = 1.0 - y * y
    s2 = -2.0 * y * s1
    s3 = -2.0 * s1 * s1 + 4.0 * y * y * s1
    return np.stack([y, s1, s2, s3])


def compose_numpy(A, S, tgt, nfac, coef, fac):
    """Jet of ``f(a)`` given ``S[n] = f^(n)(a_0)``."""
    Y = np.zeros_like(A)
    Y[0] = S[0]
    for t in range(tgt.shape[0]):
        n = nfac[t]
        v = coef[t] * S[n]
        for q in range(n):
            v = v * A[fac[t, q]]
        Y[tgt[t]] += v
    return Y


def _tanh_fwd_numpy(A, tgt, nfac, coef, fac):
    S = _tanh_derivs(A[0])
    return compose_numpy(A, S, tgt, nfac, coef, fac), S


def _tanh_bwd_numpy(G, A, S, tgt, nfac, coef, fac):
    y, s1, s2, s3 = S
    s4 = -4.0 * s1 * s2 + 8.0 * y * s1 * s1 + 4.0 * y * y * s2
    s = (y, s1, s2, s3, s4)
    GA = np.zeros_like(A)
    g0 = G[0] * s1
    for t in range(tgt.shape[0]):
        n = nfac[t]
        g = G[tgt[t]] * coef[t]
        prod = np.ones_like(g)
        for q in range(n):
            prod = prod * A[fac[t, q]]
        g0 = g0 + g * s[n + 1] * prod
        for q in range(n):
            pe = np.ones_like(g)
            for r in range(n):
                if r != q:
                    pe = pe * A[fac[t, r]]
            GA[fac[t, q]] += g * s[n] * pe
    GA[0] += g0
    return GA


# numba path ----------------------------------------------------------------

if numba is not None:
    @numba.njit(cache=True, fastmath=False)
    def _tanh_fwd_numba(A, tgt, nfac, coef, fac):
        M, P = A.shape
        Y = np.zeros((M, P))
        S = np.empty((4, P))
        for p in range(P):
            y = np.tanh(A[0, p])
            s1 = 1.0 - y * y
            S[0, p] = y
            S[1, p] = s1
            S[2, p] = -2.0 * y * s1
            S[3, p] = -2.0 * s1 * s1 + 4.0 * y * y * s1
            Y[0, p] = y
        # term-outer loop keeps the inner loop contiguous over points
        for t in range(tgt.shape[0]):
            n = nfac[t]
            c = coef[t]
            row = tgt[t]
            for p in range(P):
                v = c * S[n, p]
                for q in range(n):
                    v *= A[fac[t, q], p]
                Y[row, p] += v
        return Y, S

    @numba.njit(cache=True, fastmath=False)
    def _tanh_bwd_numba(G, A, S, tgt, nfac, coef, fac):
        M, P = A.shape
        GA = np.zeros((M, P))
        S4 = np.empty(P)
        g0 = np.empty(P)
        for p in range(P):
            y = S[0, p]
            s1 = S[1, p]
            s2 = S[2, p]
            S4[p] = -4.0 * s1 * s2 + 8.0 * y * s1 * s1 + 4.0 * y * y * s2
            g0[p] = G[0, p] * s1
        for t in range(tgt.shape[0]):
            n = nfac[t]
            c = coef[t]
            row = tgt[t]
            for p in range(P):
                g = G[row, p] * c
                prod = 1.0
                for q in range(n):
                    prod *= A[fac[t, q], p]
                up = S4[p] if n == 3 else S[n + 1, p]
                g0[p] += g * up * prod
                for q in range(n):
                    pe = 1.0
                    for r in range(n):
                        if r != q:
                            pe *= A[fac[t, r], p]
                    GA[fac[t, q], p] += g * S[n, p] * pe
        for p in range(P):
            GA[0, p] += g0[p]
        return GA


def tanh_jet_forward(A: np.ndarray, table):
    """Returns the output jet and the saved derivative stack for backward."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    args = (table.tgt, table.nfac, table.coef, table.fac)
    if _backend == "numba":
        return _tanh_fwd_numba(A, *args)
    return _tanh_fwd_numpy(A, *args)


def tanh_jet_backward(G: np.ndarray, A: np.ndarray, S: np.ndarray, table) -> np.ndarray:
    G = np.ascontiguousarray(G, dtype=np.float64)
    args = (table.tgt, table.nfac, table.coef, table.fac)
    if _backend == "numba":
        return _tanh_bwd_numba(G, A, S, *args)
    return _tanh_bwd_numpy(G, A, S, *args)
