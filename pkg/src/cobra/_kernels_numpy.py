"""Pure-numpy kernels: the portable fallback backend.

Contracts (shared with ``_kernels_numba``):

``tree_grow(X, y, max_depth, min_leaf)``
    Grow a CART regression tree for binary labels. Splits minimize Gini
    impurity of the induced label partition; candidate thresholds are the
    midpoints between consecutive distinct sorted feature values; a split
    is accepted only if it strictly reduces impurity and leaves at least
    ``min_leaf`` rows on each side. Ties are broken toward the lowest
    feature index, then the lowest threshold, which makes the grown tree
    independent of record order. Returns parallel node arrays
    ``(feature, threshold, left, right, value)`` where ``feature == -1``
    marks a leaf and ``value`` is the node's positive-label fraction.

``tree_predict(feature, threshold, left, right, value, X)``
    Route each row to its leaf; returns the leaf values.

``gnb_posterior(mean0, var0, mean1, var1, log_prior0, log_prior1, X)``
    Two-class Gaussian naive Bayes posterior P(class 1 | x) per row.

``bnn_forward(X, L1, L2, <edge arrays/weights/biases per transition>)``
    Forward pass of the sparse three-transition network. Each transition
    is stored destination-major: ``src[dptr[j]:dptr[j+1]]`` lists the
    source nodes feeding destination ``j`` and ``w`` holds the matching
    edge weights. Hidden units apply ReLU, the single output applies the
    logistic function. Returns ``(A1, A2, yhat)``.

``bnn_train_epoch(X, y, perm, batch_size, lr, momentum, <per-transition
src, dptr, w, b, vw, vb>)``
    One epoch of mini-batch gradient descent with momentum on the mean
    cross-entropy loss, visiting rows in ``perm`` order. Updates weights,
    biases and velocity buffers in place; gradients exist only for stored
    edges, so pruned connections stay identically zero. Returns
    ``(loss_sum, n_correct)`` accumulated from the pre-update forward
    values of each batch.
"""

from __future__ import annotations

import numpy as np

GAIN_EPS = 1e-12
PROB_CLIP = 1e-12


def _best_split(X, y, idx, lo, hi, min_leaf):
    m = hi - lo
    rows = idx[lo:hi]
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
    for f in range(X.shape[1]):
        vals = X[rows, f]
        order = np.argsort(vals, kind="mergesort")
        sv = vals[order]
        ys = y[rows[order]]
        cum_pos = np.cumsum(ys)[:-1]
        nl = np.arange(1, m, dtype=np.float64)
        nr = m - nl
        valid = (sv[:-1] != sv[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        pl = cum_pos / nl
        pr = (total_pos - cum_pos) / nr
        gl = 1.0 - pl * pl - (1.0 - pl) * (1.0 - pl)
        gr = 1.0 - pr * pr - (1.0 - pr) * (1.0 - pr)
        gains = parent - (nl * gl + nr * gr) * inv_m
        gains = np.where(valid, gains, -np.inf)
        c = int(np.argmax(gains))
        gain = gains[c]
        if gain > GAIN_EPS and gain > best_gain:
            best_gain = gain
            best_feat = f
            best_thr = 0.5 * (sv[c] + sv[c + 1])
    return best_feat, best_thr


def tree_grow(X, y, max_depth, min_leaf):
    n = X.shape[0]
    cap = 4 * n + 4
    if max_depth < 28:
        cap = min(cap, 2 ** (max_depth + 2))
    feat = np.full(cap, -1, np.int32)
    thr = np.zeros(cap)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    value = np.zeros(cap)
    idx = np.arange(n)
    stack = [(0, 0, n, 0)]
    n_nodes = 1
    while stack:
        node, lo, hi, depth = stack.pop()
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
        rows = idx[lo:hi]
        go_left = X[rows, f] <= t
        nl = int(go_left.sum())
        idx[lo:hi] = np.concatenate([rows[go_left], rows[~go_left]])
        feat[node] = f
        thr[node] = t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack.append((n_nodes, lo, lo + nl, depth + 1))
        stack.append((n_nodes + 1, lo + nl, hi, depth + 1))
        n_nodes += 2
    return (
        feat[:n_nodes].copy(),
        thr[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


def tree_predict(feat, thr, left, right, value, X):
    n = X.shape[0]
    cur = np.zeros(n, dtype=np.int64)
    while True:
        f = feat[cur]
        active = np.nonzero(f >= 0)[0]
        if active.size == 0:
            break
        sub = cur[active]
        fv = X[active, feat[sub]]
        go_left = fv <= thr[sub]
        cur[active] = np.where(go_left, left[sub], right[sub])
    return value[cur].astype(np.float64)


def gnb_posterior(mean0, var0, mean1, var1, log_prior0, log_prior1, X):
    d0 = X - mean0
    l0 = log_prior0 - np.sum(
        0.5 * np.log(2.0 * np.pi * var0) + d0 * d0 / (2.0 * var0), axis=1
    )
    d1 = X - mean1
    l1 = log_prior1 - np.sum(
        0.5 * np.log(2.0 * np.pi * var1) + d1 * d1 / (2.0 * var1), axis=1
    )
    # saturating to exactly 0 via exp overflow matches the scalar backend
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(l0 - l1))


def _layer_forward(A, src, dptr, w, b, relu):
    n_dst = b.shape[0]
    out = np.empty((A.shape[0], n_dst))
    with np.errstate(over="ignore"):
        for j in range(n_dst):
            s, e = dptr[j], dptr[j + 1]
            z = A[:, src[s:e]] @ w[s:e] + b[j]
            out[:, j] = np.maximum(z, 0.0) if relu else 1.0 / (1.0 + np.exp(-z))
    return out


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
    A1 = _layer_forward(X, src1, dptr1, w1, b1, True)
    A2 = _layer_forward(A1, src2, dptr2, w2, b2, True)
    yhat = _layer_forward(A2, src3, dptr3, w3, b3, False)[:, 0]
    return A1, A2, yhat


def _reverse_layout(src, dptr, n_src):
    """Source-major view of a destination-major edge list.

    Returns (rdst, rptr, rw_idx): for source i, the destinations are
    rdst[rptr[i]:rptr[i+1]] and the matching weight positions rw_idx[...].
    """
    dst = np.repeat(np.arange(len(dptr) - 1), np.diff(dptr))
    order = np.argsort(src, kind="stable")
    rdst = dst[order].astype(np.int32)
    rw_idx = order.astype(np.int32)
    counts = np.bincount(src, minlength=n_src)
    rptr = np.zeros(n_src + 1, dtype=np.int32)
    np.cumsum(counts, out=rptr[1:])
    return rdst, rptr, rw_idx


def _layer_backward(A_prev, dZ, src, dptr, w, rev, dw, db, want_dA):
    n_dst = dZ.shape[1]
    for j in range(n_dst):
        s, e = dptr[j], dptr[j + 1]
        dw[s:e] = dZ[:, j] @ A_prev[:, src[s:e]]
        db[j] = dZ[:, j].sum()
    if not want_dA:
        return None
    rdst, rptr, rw_idx = rev
    dA = np.zeros_like(A_prev)
    for i in range(A_prev.shape[1]):
        s, e = rptr[i], rptr[i + 1]
        if e > s:
            dA[:, i] = dZ[:, rdst[s:e]] @ w[rw_idx[s:e]]
    return dA


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
    rev2 = _reverse_layout(src2, dptr2, b1.shape[0])
    rev3 = _reverse_layout(src3, dptr3, b2.shape[0])
    dw1 = np.empty_like(w1)
    db1 = np.empty_like(b1)
    dw2 = np.empty_like(w2)
    db2 = np.empty_like(b2)
    dw3 = np.empty_like(w3)
    db3 = np.empty_like(b3)
    loss_sum = 0.0
    correct = 0.0
    n_batches = (n + batch_size - 1) // batch_size
    for k in range(n_batches):
        rows = perm[k * batch_size : min((k + 1) * batch_size, n)]
        Xb = X[rows]
        yb = y[rows]
        m = len(rows)
        A1, A2, yhat = bnn_forward(
            Xb, b1.shape[0], b2.shape[0],
            src1, dptr1, w1, b1, src2, dptr2, w2, b2, src3, dptr3, w3, b3,
        )
        pc = np.maximum(yhat, PROB_CLIP)
        qc = np.maximum(1.0 - yhat, PROB_CLIP)
        loss_sum += float(-(yb * np.log(pc) + (1.0 - yb) * np.log(qc)).sum())
        correct += float(((yhat >= 0.5) == (yb >= 0.5)).sum())
        dZ3 = ((yhat - yb) / m).reshape(m, 1)
        dA2 = _layer_backward(A2, dZ3, src3, dptr3, w3, rev3, dw3, db3, True)
        dZ2 = dA2 * (A2 > 0.0)
        dA1 = _layer_backward(A1, dZ2, src2, dptr2, w2, rev2, dw2, db2, True)
        dZ1 = dA1 * (A1 > 0.0)
        _layer_backward(Xb, dZ1, src1, dptr1, w1, None, dw1, db1, False)
        for warr, g, v in (
            (w1, dw1, vw1),
            (w2, dw2, vw2),
            (w3, dw3, vw3),
            (b1, db1, vb1),
            (b2, db2, vb2),
            (b3, db3, vb3),
        ):
            v *= momentum
            v -= lr * g
            warr += v
    return loss_sum, correct
