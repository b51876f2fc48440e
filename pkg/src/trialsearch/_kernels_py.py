"""Pure numpy versions of the compiled kernels.

Each function mirrors its counterpart in ``_kernels.pyx`` and accumulates in
the same order, so results agree bit for bit.  Work is vectorized over all
histories of equal size, which is the natural wavefront of the recursions.
"""

from __future__ import annotations

import math

import numpy as np


def _layers(slot: np.ndarray) -> list[np.ndarray]:
    size = (slot >= 0).sum(axis=1)
    return [np.flatnonzero(size == s) for s in range(slot.shape[1] + 1)]


def rho_exact_table(P, values, slot, best, stride, eps, average_orders=False):
    n, k, ny = P.shape
    thr = np.concatenate([[-np.inf], np.asarray(values, dtype=float) + eps])
    G = np.zeros((n, ny + 1))
    for idx in reversed(_layers(slot)):
        sl = slot[idx]
        open_ = sl < 0
        n_untried = open_.sum(axis=1)
        if average_orders:
            candidates = range(k)
        else:
            first = np.argmax(open_, axis=1)
            candidates = [None]
        total = np.zeros((len(idx), ny + 1))
        for a in candidates:
            if a is None:
                act = first
                live = n_untried > 0
            else:
                act = np.full(len(idx), a)
                live = open_[:, a]
            acc = np.zeros((len(idx), ny + 1))
            for y in range(ny):
                p = P[idx, act, y][:, None]
                ext = idx + (y + 1) * stride[act]
                ext = np.where(live, ext, 0)
                hit = values[y] > thr[None, :]
                acc = acc + np.where(hit, p, p * G[ext])
            total = np.where(live[:, None], total + acc, total)
        if average_orders:
            total = np.where(n_untried[:, None] > 0, total / np.maximum(n_untried, 1)[:, None], total)
        G[idx] = total
    return G[np.arange(n), best + 1]


def rho_bound_table(P, values, slot, best, eps, upper):
    n, k, ny = P.shape
    values = np.asarray(values, dtype=float)
    thr = np.where(best < 0, -np.inf, values[np.maximum(best, 0)] + eps)
    out = np.zeros(n)
    for a in range(k):
        acc = np.zeros(n)
        for y in range(ny):
            acc = np.where(values[y] > thr, acc + P[:, a, y], acc)
        live = slot[:, a] < 0
        if upper:
            out = np.where(live, out + acc, out)
        else:
            out = np.where(live & (acc > out), acc, out)
    return np.minimum(out, 1.0)


def backward_induction(P, step_reward, stop_reward, stop_ok, slot, stride):
    n, k, ny = P.shape
    V = np.empty(n)
    choice = np.empty(n, dtype=np.int64)
    Q = np.full((n, k), -np.inf)
    for idx in reversed(_layers(slot)):
        sl = slot[idx]
        bestv = np.where(stop_ok[idx].astype(bool), stop_reward[idx], -np.inf)
        bestc = np.full(len(idx), -1, dtype=np.int64)
        for a in range(k):
            live = sl[:, a] < 0
            q = np.zeros(len(idx))
            for y in range(ny):
                ext = np.where(live, idx + (y + 1) * stride[a], 0)
                q = q + P[idx, a, y] * V[ext]
            q = step_reward + q
            Q[idx[live], a] = q[live]
            better = live & (q > bestv)
            bestv = np.where(better, q, bestv)
            bestc = np.where(better, a, bestc)
        V[idx] = bestv
        choice[idx] = bestc
    return V, choice, Q


def smooth_table(counts, beta0, historical, slot, size, stride):
    n, k, ny = counts.shape
    out = np.empty((n, k, ny))
    for i in range(n):
        tried = [a for a in range(k) if slot[i, a] >= 0]
        s = len(tried)
        subs = []
        if historical and s > 0:
            for mask in range((1 << s) - 1):
                sub = 0
                sub_size = 0
                for t in range(s):
                    if mask & (1 << t):
                        sub += (int(slot[i, tried[t]]) + 1) * int(stride[tried[t]])
                        sub_size += 1
                d = s - sub_size - 1
                subs.append((sub, math.exp(-(d * d)) / (s * (2.0**d))))
        for a in range(k):
            if slot[i, a] >= 0:
                out[i, a, :] = 1.0 / ny
                continue
            if subs:
                beta = np.zeros(ny)
                wsum = 0.0
                for sub, w in subs:
                    wsum += w
                    beta = beta + w * out[sub, a]
                beta = beta * (beta0 * ny / wsum)
            else:
                beta = np.full(ny, float(beta0))
            c = counts[i, a] + beta
            tot = 0.0
            for y in range(ny):
                tot += c[y]
            out[i, a] = c / tot
    return out
