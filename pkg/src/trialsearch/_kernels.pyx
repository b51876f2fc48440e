# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels over dense history tables.

All arrays are indexed by the dense history index of ``trialsearch.core``.
Extending history ``i`` with ``(a, y)`` lands on ``i + (y + 1) * stride[a]``,
which is always larger than ``i``; backward passes therefore walk indices
from high to low and forward passes from low to high.

The summation order matches ``_kernels_py`` exactly so both backends return
bit-identical results.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, INFINITY

cnp.import_array()


def rho_exact_table(const double[:, :, ::1] P, const double[::1] values,
                    const long[:, ::1] slot, const long[::1] best,
                    const long[::1] stride, double eps, bint average_orders=False):
    cdef Py_ssize_t n = P.shape[0], k = P.shape[1], ny = P.shape[2]
    cdef Py_ssize_t nthr = ny + 1
    cdef double[:, ::1] G = np.zeros((n, nthr), dtype=np.float64)
    cdef double[::1] thr = np.empty(nthr, dtype=np.float64)
    cdef double[::1] rho = np.zeros(n, dtype=np.float64)
    cdef Py_ssize_t i, j, a, y, ext, n_untried
    cdef double acc, total, p
    thr[0] = -INFINITY
    for j in range(1, nthr):
        thr[j] = values[j - 1] + eps
    for i in range(n - 1, -1, -1):
        for j in range(nthr):
            total = 0.0
            n_untried = 0
            for a in range(k):
                if slot[i, a] >= 0:
                    continue
                n_untried += 1
                acc = 0.0
                for y in range(ny):
                    p = P[i, a, y]
                    if values[y] > thr[j]:
                        acc += p
                    else:
                        ext = i + (y + 1) * stride[a]
                        acc += p * G[ext, j]
                total += acc
                if not average_orders:
                    break
            if n_untried > 0 and average_orders:
                total = total / n_untried
            G[i, j] = total
        rho[i] = G[i, best[i] + 1]
    return np.asarray(rho)


def rho_bound_table(const double[:, :, ::1] P, const double[::1] values,
                    const long[:, ::1] slot, const long[::1] best,
                    double eps, bint upper):
    cdef Py_ssize_t n = P.shape[0], k = P.shape[1], ny = P.shape[2]
    cdef double[::1] rho = np.zeros(n, dtype=np.float64)
    cdef Py_ssize_t i, a, y
    cdef double thr, acc, out
    for i in range(n):
        thr = -INFINITY if best[i] < 0 else values[best[i]] + eps
        out = 0.0
        for a in range(k):
            if slot[i, a] >= 0:
                continue
            acc = 0.0
            for y in range(ny):
                if values[y] > thr:
                    acc += P[i, a, y]
            if upper:
                out += acc
            elif acc > out:
                out = acc
        if out > 1.0:
            out = 1.0
        rho[i] = out
    return np.asarray(rho)


def backward_induction(const double[:, :, ::1] P, double step_reward,
                       const double[::1] stop_reward, const unsigned char[::1] stop_ok,
                       const long[:, ::1] slot, const long[::1] stride):
    """Finite-horizon Bellman backup over all histories of one context.

    Returns ``(V, choice, Q)``; ``choice`` is -1 for STOP, ``Q[i, a]`` is
    ``-inf`` for tried actions.  STOP wins ties, then the lowest action id.
    """
    cdef Py_ssize_t n = P.shape[0], k = P.shape[1], ny = P.shape[2]
    cdef double[::1] V = np.empty(n, dtype=np.float64)
    cdef long[::1] choice = np.empty(n, dtype=np.int64)
    cdef double[:, ::1] Q = np.full((n, k), -INFINITY, dtype=np.float64)
    cdef Py_ssize_t i, a, y
    cdef double bestv, q
    cdef long bestc
    for i in range(n - 1, -1, -1):
        if stop_ok[i]:
            bestv = stop_reward[i]
        else:
            bestv = -INFINITY
        bestc = -1
        for a in range(k):
            if slot[i, a] >= 0:
                continue
            q = 0.0
            for y in range(ny):
                q += P[i, a, y] * V[i + (y + 1) * stride[a]]
            q = step_reward + q
            Q[i, a] = q
            if q > bestv:
                bestv = q
                bestc = a
        V[i] = bestv
        choice[i] = bestc
    return np.asarray(V), np.asarray(choice), np.asarray(Q)


def smooth_table(const double[:, :, ::1] counts, double beta0, bint historical,
                 const long[:, ::1] slot, const long[::1] size,
                 const long[::1] stride):
    """Dirichlet posterior means for every (history, action) cell.

    With ``historical`` the prior at a non-empty history is the weighted
    average of the posteriors at all strict sub-histories, rescaled to total
    mass ``beta0 * n_y``; the empty history uses the uniform prior.
    """
    cdef Py_ssize_t n = counts.shape[0], k = counts.shape[1], ny = counts.shape[2]
    cdef double[:, :, ::1] out = np.empty((n, k, ny), dtype=np.float64)
    cdef double[::1] beta = np.empty(ny, dtype=np.float64)
    cdef long[::1] tried = np.empty(k, dtype=np.int64)
    cdef Py_ssize_t i, a, y, t, s, sub_size
    cdef long mask, nmask, sub
    cdef double w, wsum, tot, scale
    for i in range(n):
        s = 0
        for a in range(k):
            if slot[i, a] >= 0:
                tried[s] = a
                s += 1
        for a in range(k):
            if slot[i, a] >= 0:
                for y in range(ny):
                    out[i, a, y] = 1.0 / ny
                continue
            if historical and s > 0:
                for y in range(ny):
                    beta[y] = 0.0
                wsum = 0.0
                nmask = (<long>1) << s
                for mask in range(nmask - 1):
                    sub = 0
                    sub_size = 0
                    for t in range(s):
                        if mask & ((<long>1) << t):
                            sub += (slot[i, tried[t]] + 1) * stride[tried[t]]
                            sub_size += 1
                    w = exp(-((s - sub_size - 1) * (s - sub_size - 1))) / (s * (2.0 ** (s - sub_size - 1)))
                    wsum += w
                    for y in range(ny):
                        beta[y] += w * out[sub, a, y]
                scale = beta0 * ny / wsum
                for y in range(ny):
                    beta[y] *= scale
            else:
                for y in range(ny):
                    beta[y] = beta0
            tot = 0.0
            for y in range(ny):
                tot += counts[i, a, y] + beta[y]
            for y in range(ny):
                out[i, a, y] = (counts[i, a, y] + beta[y]) / tot
    return np.asarray(out)
