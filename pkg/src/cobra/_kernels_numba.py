"""Numba-compiled kernels: scalar loops, one pass per batch, no Python
object traffic inside. Signatures mirror ``_kernels_numpy`` exactly; the
numpy module documents the contracts.
"""

from __future__ import annotations

import numpy as np
from numba import njit

GAIN_EPS = 1e-12
PROB_CLIP = 1e-12


@njit(cache=True)
def _best_split(X, y, idx, lo, hi, min_leaf):
    m = hi - lo
    total_pos = 0.0
    for i in range(lo, hi):
        total_pos += y[idx[i]]
    inv_m = 1.0 / m
    p1 = total_pos * inv_m
    p0 = (m - total_pos) * inv_m
    parent = 1.0 - p1 * p1 - p0 * p0
    best_gain = 0.0
    best_feat = -1
    best_thr = 0.0
    vals = np.empty(m)
    ys = np.empty(m)
    for f in range(X.shape[1]):
        for i in range(m):
            vals[i] = X[idx[lo + i], f]
        order = np.argsort(vals, kind="mergesort")
        for i in range(m):
            ys[i] = y[idx[lo + order[i]]]
        cum_pos = 0.0
        for c in range(m - 1):
            cum_pos += ys[c]
            if vals[order[c]] == vals[order[c + 1]]:
                continue
            nl = c + 1
            nr = m - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            pl = cum_pos / nl
            pr = (total_pos - cum_pos) / nr
            gl = 1.0 - pl * pl - (1.0 - pl) * (1.0 - pl)
            gr = 1.0 - pr * pr - (1.0 - pr) * (1.0 - pr)
            gain = parent - (nl * gl + nr * gr) * inv_m
            if gain > GAIN_EPS and gain > best_gain:
                best_gain = gain
                best_feat = f
                best_thr = 0.5 * (vals[order[c]] + vals[order[c + 1]])
    return best_feat, best_thr


@njit(cache=True)
def tree_grow(X, y, max_depth, min_leaf):
    n = X.shape[0]
    cap = 4 * n + 4
    if max_depth < 28:
        by_depth = 2 ** (max_depth + 2)
        if by_depth < cap:
            cap = by_depth
    feat = np.full(cap, -1, np.int32)
    thr = np.zeros(cap)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    value = np.zeros(cap)
    idx = np.arange(n)
    stack = np.empty((cap, 4), np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    tmp = np.empty(n, np.int64)
    while top > 0:
        top -= 1
        node = stack[top, 0]
        lo = stack[top, 1]
        hi = stack[top, 2]
        depth = stack[top, 3]
        m = hi - lo
        pos = 0.0
        for i in range(lo, hi):
            pos += y[idx[i]]
        value[node] = pos / m
        if depth >= max_depth or pos == 0.0 or pos == m:
            continue
        f, t = _best_split(X, y, idx, lo, hi, min_leaf)
        if f < 0:
            continue
        nl = 0
        for i in range(lo, hi):
            if X[idx[i], f] <= t:
                tmp[nl] = idx[i]
                nl += 1
        nr = nl
        for i in range(lo, hi):
            if X[idx[i], f] > t:
                tmp[nr] = idx[i]
                nr += 1
        for i in range(m):
            idx[lo + i] = tmp[i]
        feat[node] = f
        thr[node] = t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack[top, 0] = n_nodes
        stack[top, 1] = lo
        stack[top, 2] = lo + nl
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = n_nodes + 1
        stack[top, 1] = lo + nl
        stack[top, 2] = hi
        stack[top, 3] = depth + 1
        top += 1
        n_nodes += 2
    return (
        feat[:n_nodes].copy(),
        thr[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True)
def tree_predict(feat, thr, left, right, value, X):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feat[node] >= 0:
            if X[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True)
def gnb_posterior(mean0, var0, mean1, var1, log_prior0, log_prior1, X):
    n = X.shape[0]
    k = X.shape[1]
    out = np.empty(n)
    for i in range(n):
        l0 = log_prior0
        l1 = log_prior1
        for f in range(k):
            d0 = X[i, f] - mean0[f]
            l0 -= 0.5 * np.log(2.0 * np.pi * var0[f]) + d0 * d0 / (2.0 * var0[f])
            d1 = X[i, f] - mean1[f]
            l1 -= 0.5 * np.log(2.0 * np.pi * var1[f]) + d1 * d1 / (2.0 * var1[f])
        out[i] = 1.0 / (1.0 + np.exp(l0 - l1))
    return out


@njit(cache=True)
def bnn_forward(
    X,
    L1,
    L2,
    src1,
    dptr1,
    w1,
    b1,
    src2,
    dptr2,
    w2,
    b2,
    src3,
    dptr3,
    w3,
    b3,
):
    n = X.shape[0]
    A1 = np.empty((n, L1))
    A2 = np.empty((n, L2))
    yhat = np.empty(n)
    for r in range(n):
        for j in range(L1):
            acc = b1[j]
            for p in range(dptr1[j], dptr1[j + 1]):
                acc += w1[p] * X[r, src1[p]]
            A1[r, j] = acc if acc > 0.0 else 0.0
        for j in range(L2):
            acc = b2[j]
            for p in range(dptr2[j], dptr2[j + 1]):
                acc += w2[p] * A1[r, src2[p]]
            A2[r, j] = acc if acc > 0.0 else 0.0
        acc = b3[0]
        for p in range(dptr3[0], dptr3[1]):
            acc += w3[p] * A2[r, src3[p]]
        yhat[r] = 1.0 / (1.0 + np.exp(-acc))
    return A1, A2, yhat


@njit(cache=True)
def bnn_train_epoch(
    X,
    y,
    perm,
    batch_size,
    lr,
    momentum,
    src1,
    dptr1,
    w1,
    b1,
    vw1,
    vb1,
    src2,
    dptr2,
    w2,
    b2,
    vw2,
    vb2,
    src3,
    dptr3,
    w3,
    b3,
    vw3,
    vb3,
):
    n = X.shape[0]
    L1 = b1.shape[0]
    L2 = b2.shape[0]
    n_batches = (n + batch_size - 1) // batch_size
    dw1 = np.zeros_like(w1)
    db1 = np.zeros_like(b1)
    dw2 = np.zeros_like(w2)
    db2 = np.zeros_like(b2)
    dw3 = np.zeros_like(w3)
    db3 = np.zeros_like(b3)
    dA1 = np.empty(L1)
    dA2 = np.empty(L2)
    loss_sum = 0.0
    correct = 0.0
    for k in range(n_batches):
        lo = k * batch_size
        hi = min(lo + batch_size, n)
        m = hi - lo
        A1 = np.empty((m, L1))
        A2 = np.empty((m, L2))
        yhat = np.empty(m)
        for r in range(m):
            row = perm[lo + r]
            for j in range(L1):
                acc = b1[j]
                for p in range(dptr1[j], dptr1[j + 1]):
                    acc += w1[p] * X[row, src1[p]]
                A1[r, j] = acc if acc > 0.0 else 0.0
            for j in range(L2):
                acc = b2[j]
                for p in range(dptr2[j], dptr2[j + 1]):
                    acc += w2[p] * A1[r, src2[p]]
                A2[r, j] = acc if acc > 0.0 else 0.0
            acc = b3[0]
            for p in range(dptr3[0], dptr3[1]):
                acc += w3[p] * A2[r, src3[p]]
            yhat[r] = 1.0 / (1.0 + np.exp(-acc))
        for p in range(dw1.shape[0]):
            dw1[p] = 0.0
        for p in range(dw2.shape[0]):
            dw2[p] = 0.0
        for p in range(dw3.shape[0]):
            dw3[p] = 0.0
        for j in range(L1):
            db1[j] = 0.0
        for j in range(L2):
            db2[j] = 0.0
        db3[0] = 0.0
        for r in range(m):
            row = perm[lo + r]
            t = y[row]
            pr = yhat[r]
            pc = pr if pr > PROB_CLIP else PROB_CLIP
            qc = 1.0 - pr if 1.0 - pr > PROB_CLIP else PROB_CLIP
            loss_sum += -(t * np.log(pc) + (1.0 - t) * np.log(qc))
            if (pr >= 0.5) == (t >= 0.5):
                correct += 1.0
            dz3 = (pr - t) / m
            db3[0] += dz3
            for j in range(L2):
                dA2[j] = 0.0
            for p in range(dptr3[0], dptr3[1]):
                dw3[p] += dz3 * A2[r, src3[p]]
                dA2[src3[p]] += dz3 * w3[p]
            for j in range(L1):
                dA1[j] = 0.0
            for j in range(L2):
                if A2[r, j] <= 0.0:
                    continue
                dz2 = dA2[j]
                db2[j] += dz2
                for p in range(dptr2[j], dptr2[j + 1]):
                    dw2[p] += dz2 * A1[r, src2[p]]
                    dA1[src2[p]] += dz2 * w2[p]
            for j in range(L1):
                if A1[r, j] <= 0.0:
                    continue
                dz1 = dA1[j]
                db1[j] += dz1
                for p in range(dptr1[j], dptr1[j + 1]):
                    dw1[p] += dz1 * X[row, src1[p]]
        for p in range(w1.shape[0]):
            vw1[p] = momentum * vw1[p] - lr * dw1[p]
            w1[p] += vw1[p]
        for p in range(w2.shape[0]):
            vw2[p] = momentum * vw2[p] - lr * dw2[p]
            w2[p] += vw2[p]
        for p in range(w3.shape[0]):
            vw3[p] = momentum * vw3[p] - lr * dw3[p]
            w3[p] += vw3[p]
        for j in range(L1):
            vb1[j] = momentum * vb1[j] - lr * db1[j]
            b1[j] += vb1[j]
        for j in range(L2):
            vb2[j] = momentum * vb2[j] - lr * db2[j]
            b2[j] += vb2[j]
        vb3[0] = momentum * vb3[0] - lr * db3[0]
        b3[0] += vb3[0]
    return loss_sum, correct
