"""JIT inner loops for full-pattern training on bipolar items.

When every pattern entry is +1/-1 and the loss runs over all columns, one of
the two clamped overlaps per (item, memory, neuron) collapses onto the base
overlap, halving kernel evaluations. The loops are structured so each output
element is accumulated sequentially by a single thread, keeping results
bit-reproducible regardless of thread count. Falls back to the vectorized
numpy path when numba is unavailable.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap

    prange = range


@njit(cache=True, parallel=True)
def _fields_pass(X, bank, S, beta, vertex, leak, is_int, vi, fields, dfu, dfv):
    B, N = X.shape
    K = bank.shape[0]
    for b in prange(B):
        for i in range(N):
            fields[b, i] = 0.0
        for k in range(K):
            u = beta * S[b, k]
            if u > 0.0:
                if is_int:
                    pm1 = 1.0
                    base = u
                    e = vi - 1
                    while e:
                        if e & 1:
                            pm1 *= base
                        e >>= 1
                        if e:
                            base *= base
                else:
                    pm1 = u ** (vertex - 1.0)
                fu = pm1 * u
                du = vertex * pm1
            else:
                fu = -leak * u
                du = -leak
            dfu[b, k] = du
            for i in range(N):
                v = u - 2.0 * beta * X[b, i] * bank[k, i]
                if v > 0.0:
                    if is_int:
                        pm1 = 1.0
                        base = v
                        e = vi - 1
                        while e:
                            if e & 1:
                                pm1 *= base
                            e >>= 1
                            if e:
                                base *= base
                    else:
                        pm1 = v ** (vertex - 1.0)
                    fv = pm1 * v
                    dv = vertex * pm1
                else:
                    fv = -leak * v
                    dv = -leak
                fields[b, i] += X[b, i] * (fu - fv)
                dfv[b, k, i] = dv


@njit(cache=True, parallel=True)
def _grad_pass(X, e, beta, dfu, dfv, grad):
    B, N = X.shape
    K = grad.shape[0]
    for k in prange(K):
        for j in range(N):
            grad[k, j] = 0.0
        for b in range(B):
            w = 0.0
            for i in range(N):
                d = X[b, i] * (dfu[b, k] - dfv[b, k, i])
                w += e[b, i] * d
                grad[k, i] += 2.0 * beta * e[b, i] * dfv[b, k, i]
            wb = beta * w
            for j in range(N):
                grad[k, j] += wb * X[b, j]


@njit(cache=True, parallel=True)
def _fields_only(X, bank, S, beta, vertex, leak, is_int, vi, cols, fields):
    B = X.shape[0]
    K = bank.shape[0]
    C = cols.shape[0]
    for b in prange(B):
        for c in range(C):
            fields[b, c] = 0.0
        for k in range(K):
            u = beta * S[b, k]
            if u > 0.0:
                if is_int:
                    f = 1.0
                    base = u
                    e = vi
                    while e:
                        if e & 1:
                            f *= base
                        e >>= 1
                        if e:
                            base *= base
                    fu = f
                else:
                    fu = u**vertex
            else:
                fu = -leak * u
            for c in range(C):
                i = cols[c]
                v = u - 2.0 * beta * X[b, i] * bank[k, i]
                if v > 0.0:
                    if is_int:
                        f = 1.0
                        base = v
                        e = vi
                        while e:
                            if e & 1:
                                f *= base
                            e >>= 1
                            if e:
                                base *= base
                        fv = f
                    else:
                        fv = v**vertex
                else:
                    fv = -leak * v
                fields[b, c] += X[b, i] * (fu - fv)


def _vertex_args(vertex: float):
    is_int = float(vertex).is_integer() and 1 <= vertex <= 64
    return bool(is_int), int(vertex) if is_int else 0


def all_bipolar(X: np.ndarray) -> bool:
    return bool(np.all(np.abs(X) == 1.0))


def bipolar_loss_grad(X, Y, bank, beta, vertex, leak, m):
    """Loss and gradient over all columns for fully bipolar X."""
    X = np.ascontiguousarray(X)
    bank = np.ascontiguousarray(bank)
    B, N = X.shape
    K = bank.shape[0]
    S = X @ bank.T
    fields = np.empty((B, N))
    dfu = np.empty((B, K))
    dfv = np.empty((B, K, N))
    is_int, vi = _vertex_args(vertex)
    _fields_pass(X, bank, S, beta, vertex, leak, is_int, vi, fields, dfu, dfv)
    act = np.tanh(fields)
    resid = Y - act
    rm = resid if m == 1 else resid ** (2 * m - 1)
    loss = float((resid ** (2 * m)).sum()) if m != 1 else float((resid * resid).sum())
    e = (-2.0 * m) * rm * (1.0 - act * act)
    grad = np.empty((K, N))
    _grad_pass(X, np.ascontiguousarray(e), beta, dfu, dfv, grad)
    return loss, fields, grad


def bipolar_fields(X, bank, beta, vertex, leak, cols):
    """Fields at ``cols`` for X bipolar on those columns (other entries free)."""
    X = np.ascontiguousarray(X)
    bank = np.ascontiguousarray(bank)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    S = X @ bank.T
    fields = np.empty((X.shape[0], len(cols)))
    is_int, vi = _vertex_args(vertex)
    _fields_only(X, bank, S, beta, vertex, leak, is_int, vi, cols, fields)
    return fields
