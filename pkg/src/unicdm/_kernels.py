"""Hot loops over subjects x patterns x items.

Each kernel has a numba implementation and a pure-numpy one. The loss and
counting kernels use identical floating-point operation order, so both paths
give bitwise-equal results; the posterior kernel agrees to rounding. Setting
``UNICDM_DISABLE_NUMBA=1`` (or a missing numba install) selects numpy.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("UNICDM_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    import numba
except ImportError:
    numba = None

HAVE_NUMBA = numba is not None
BACKEND = "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------- numpy path


def loss_matrix_numpy(X, c0, c1, h):
    N, J = X.shape
    L = np.zeros((N, c0.shape[0]))
    for j in range(J):
        L += np.where(X[:, j : j + 1] == 1, c1[None, :, j], c0[None, :, j])
    L += h[None, :]
    return L


def assign_numpy(X, c0, c1, h):
    L = loss_matrix_numpy(X, c0, c1, h)
    a = np.argmin(L, axis=1).astype(np.int64)
    return a, L[np.arange(L.shape[0]), a]


def row_losses_numpy(X, c0, c1, h, a):
    N, J = X.shape
    out = np.zeros(N)
    for j in range(J):
        out += np.where(X[:, j] == 1, c1[a, j], c0[a, j])
    out += h[a]
    return out


def seq_sum_numpy(v):
    return float(np.cumsum(v)[-1]) if len(v) else 0.0


def class_sums_numpy(X, a, M):
    counts = np.bincount(a, minlength=M).astype(np.int64)
    S = np.zeros((M, X.shape[1]), dtype=np.int64)
    np.add.at(S, a, X.astype(np.int64))
    return S, counts


def log_posterior_numpy(L):
    """Row-normalise ``exp(-L)`` in log space; returns (log_post, log_marginal)."""
    neg = -L
    top = neg.max(axis=1)
    acc = np.zeros(L.shape[0])
    for m in range(L.shape[1]):
        acc += np.exp(neg[:, m] - top)
    lse = top + np.log(acc)
    return neg - lse[:, None], lse


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def loss_matrix_numba(X, c0, c1, h):
        N, J = X.shape
        M = c0.shape[0]
        L = np.empty((N, M))
        for i in range(N):
            for m in range(M):
                acc = 0.0
                for j in range(J):
                    if X[i, j] == 1:
                        acc += c1[m, j]
                    else:
                        acc += c0[m, j]
                L[i, m] = acc + h[m]
        return L

    @numba.njit(cache=True, nogil=True)
    def assign_numba(X, c0, c1, h):
        N, J = X.shape
        M = c0.shape[0]
        a = np.empty(N, dtype=np.int64)
        best = np.empty(N)
        for i in range(N):
            b = np.inf
            bm = 0
            for m in range(M):
                acc = 0.0
                for j in range(J):
                    if X[i, j] == 1:
                        acc += c1[m, j]
                    else:
                        acc += c0[m, j]
                acc = acc + h[m]
                if acc < b:
                    b = acc
                    bm = m
            a[i] = bm
            best[i] = b
        return a, best

    @numba.njit(cache=True, nogil=True)
    def row_losses_numba(X, c0, c1, h, a):
        N, J = X.shape
        out = np.empty(N)
        for i in range(N):
            m = a[i]
            acc = 0.0
            for j in range(J):
                if X[i, j] == 1:
                    acc += c1[m, j]
                else:
                    acc += c0[m, j]
            out[i] = acc + h[m]
        return out

    @numba.njit(cache=True, nogil=True)
    def _seq_sum_numba(v):
        acc = 0.0
        for x in v:
            acc += x
        return acc

    def seq_sum_numba(v):
        return float(_seq_sum_numba(np.asarray(v, dtype=np.float64)))

    @numba.njit(cache=True, nogil=True)
    def class_sums_numba(X, a, M):
        N, J = X.shape
        S = np.zeros((M, J), dtype=np.int64)
        counts = np.zeros(M, dtype=np.int64)
        for i in range(N):
            m = a[i]
            counts[m] += 1
            for j in range(J):
                S[m, j] += X[i, j]
        return S, counts

    @numba.njit(cache=True, nogil=True)
    def log_posterior_numba(L):
        N, M = L.shape
        out = np.empty((N, M))
        lse = np.empty(N)
        for i in range(N):
            top = -np.inf
            for m in range(M):
                if -L[i, m] > top:
                    top = -L[i, m]
            acc = 0.0
            for m in range(M):
                acc += np.exp(-L[i, m] - top)
            lse[i] = top + np.log(acc)
            for m in range(M):
                out[i, m] = -L[i, m] - lse[i]
        return out, lse

    loss_matrix = loss_matrix_numba
    assign = assign_numba
    row_losses = row_losses_numba
    seq_sum = seq_sum_numba
    class_sums = class_sums_numba
    log_posterior = log_posterior_numba
else:
    loss_matrix = loss_matrix_numpy
    assign = assign_numpy
    row_losses = row_losses_numpy
    seq_sum = seq_sum_numpy
    class_sums = class_sums_numpy
    log_posterior = log_posterior_numpy
