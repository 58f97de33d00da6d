"""Compiled pairwise kernels for orbit features.

Every kernel evaluates, for rows ``i`` of ``A`` and ``j`` of ``B``::

    acc = sum_g w[g] * max_b sum_t coef[t] * phi(A[i, g, b, t], B[j, g, b, t])

stopping early once ``acc >= cap`` (the returned value is then only known to
be ``>= cap``).  ``phi`` is the circle metric on 64-bit fixed point turns,
the discrete 0/1 metric, or the 2-adic metric ``2**-v(a xor b)``.
``pair_block`` fills a dense matrix, ``pair_list`` evaluates listed index
pairs of one feature array.
"""
from __future__ import annotations

import warnings

import numba as nb
import numpy as np

# an old system TBB only disables one threading layer; numba falls back to omp
warnings.filterwarnings("ignore", message="The TBB threading layer", category=nb.NumbaWarning)

_TWO_M63 = 2.0**-63


@nb.njit(cache=True)
def phi_circle(a, b):
    u = a - b
    v = np.uint64(0) - u
    m = u if u < v else v
    return float(m) * _TWO_M63


@nb.njit(cache=True)
def phi_bits(a, b):
    return 1.0 if a != b else 0.0


@nb.njit(cache=True)
def phi_dyadic(a, b):
    x = a ^ b
    if x == 0:
        return 0.0
    return 1.0 / float(x & (~x + np.uint64(1)))


KINDS = {"circle": phi_circle, "bits": phi_bits, "dyadic": phi_dyadic}


@nb.njit(cache=True)
def feat_dense(A, S, i, g, b, t):
    return A[i, g, b, t]


@nb.njit(cache=True)
def feat_shift(A, S, i, g, b, t):
    # translation features are stored once and shifted by S[g]
    return A[i, 0, b, t] + S[g, b, t]


@nb.njit(cache=True)
def _one(phi, feat, A, S, i, j, w, coef, cap):
    G = w.shape[0]
    NB, T = A.shape[2], A.shape[3]
    acc = 0.0
    for g in range(G):
        dg = 0.0
        for b in range(NB):
            s = 0.0
            for t in range(T):
                s += coef[t] * phi(feat(A, S, i, g, b, t), feat(A, S, j, g, b, t))
            if s > dg:
                dg = s
        acc += w[g] * dg
        if acc >= cap:
            break
    return acc


@nb.njit(cache=True, parallel=True)
def pair_block(phi, feat, A, S, I, J, w, coef, cap):
    """``len(I) x len(J)`` matrix of distances, each capped early at ``cap``."""
    out = np.empty((I.shape[0], J.shape[0]))
    for a in nb.prange(I.shape[0]):
        for b in range(J.shape[0]):
            out[a, b] = _one(phi, feat, A, S, I[a], J[b], w, coef, cap)
    return out


@nb.njit(cache=True, parallel=True)
def pair_list(phi, feat, A, S, I, J, w, coef):
    """Exact distances between rows ``I[k]`` and ``J[k]`` of ``A``.

    Group elements form the outer loop so the inner loop streams through
    the pairs; the summation order over ``g`` matches :func:`pair_block`.
    """
    G = w.shape[0]
    NB, T = A.shape[2], A.shape[3]
    n = I.shape[0]
    out = np.zeros(n)
    chunk = 2048
    for c in nb.prange((n + chunk - 1) // chunk):
        lo, hi = c * chunk, min(n, (c + 1) * chunk)
        m = hi - lo
        dg = np.empty(m)
        sb = np.empty(m)
        for g in range(G):
            dg[:] = 0.0
            for b in range(NB):
                sb[:] = 0.0
                for t in range(T):
                    ct = coef[t]
                    for k in range(m):
                        sb[k] += ct * phi(feat(A, S, I[lo + k], g, b, t), feat(A, S, J[lo + k], g, b, t))
                for k in range(m):
                    if sb[k] > dg[k]:
                        dg[k] = sb[k]
            wg = w[g]
            for k in range(m):
                out[lo + k] += wg * dg[k]
    return out


@nb.njit(cache=True, parallel=True)
def row_distances(phi, feat, A, S, p, w, coef):
    """Exact distances from row ``p`` to every row of ``A``."""
    G = w.shape[0]
    NB, T = A.shape[2], A.shape[3]
    n = A.shape[0]
    out = np.zeros(n)
    chunk = 2048
    for c in nb.prange((n + chunk - 1) // chunk):
        lo, hi = c * chunk, min(n, (c + 1) * chunk)
        dg = np.empty(hi - lo)
        sb = np.empty(hi - lo)
        for g in range(G):
            dg[:] = 0.0
            for b in range(NB):
                sb[:] = 0.0
                for t in range(T):
                    ct = coef[t]
                    xp = feat(A, S, p, g, b, t)
                    for j in range(lo, hi):
                        sb[j - lo] += ct * phi(xp, feat(A, S, j, g, b, t))
                for k in range(hi - lo):
                    if sb[k] > dg[k]:
                        dg[k] = sb[k]
            wg = w[g]
            for k in range(hi - lo):
                out[lo + k] += wg * dg[k]
    return out


@nb.njit(cache=True)
def _survives(P, i, j, lim):
    for q in range(P.shape[1]):
        if abs(P[i, q] - P[j, q]) >= lim:
            return False
    return True


@nb.njit(cache=True, parallel=True)
def pivot_candidates(P, I, J, lim):
    """Pairs ``(a, b)`` whose pivot lower bound ``max_q |P[I[a], q] - P[J[b], q]|``
    stays below ``lim``; returned as two position arrays in row-major order."""
    na, nb_ = I.shape[0], J.shape[0]
    counts = np.zeros(na + 1, dtype=np.int64)
    for a in nb.prange(na):
        c = 0
        for b in range(nb_):
            if _survives(P, I[a], J[b], lim):
                c += 1
        counts[a + 1] = c
    offs = np.cumsum(counts)
    R = np.empty(offs[na], dtype=np.int64)
    C = np.empty(offs[na], dtype=np.int64)
    for a in nb.prange(na):
        k = offs[a]
        for b in range(nb_):
            if _survives(P, I[a], J[b], lim):
                R[k] = a
                C[k] = b
                k += 1
    return R, C


@nb.njit(cache=True)
def greedy_cover(indptr, indices, target):
    """Greedy max-coverage over a symmetric neighbourhood graph.

    Repeatedly picks the vertex whose closed neighbourhood holds the most
    uncovered vertices (lowest index on ties) until more than ``target``
    vertices are covered.  Returns the chosen centres and the covered mask.
    """
    n = indptr.shape[0] - 1
    gain = np.empty(n, dtype=np.int64)
    for v in range(n):
        gain[v] = indptr[v + 1] - indptr[v]
    covered = np.zeros(n, dtype=np.bool_)
    chosen = np.empty(n, dtype=np.int64)
    k = 0
    ncov = 0
    while ncov <= target and k < n:
        best = 0
        for v in range(1, n):
            if gain[v] > gain[best]:
                best = v
        if gain[best] == 0:
            break
        chosen[k] = best
        k += 1
        for p in range(indptr[best], indptr[best + 1]):
            u = indices[p]
            if not covered[u]:
                covered[u] = True
                ncov += 1
                for q in range(indptr[u], indptr[u + 1]):
                    gain[indices[q]] -= 1
    return chosen[:k], covered
