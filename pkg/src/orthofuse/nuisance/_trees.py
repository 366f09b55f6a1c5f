"""Exact-greedy gradient boosted trees (numba kernels).

Trees are stored in heap layout: node ``k`` has children ``2k+1`` and
``2k+2``. A tree of depth ``D`` therefore occupies ``2**(D+1) - 1`` slots.
Splits maximise ``G_L^2/H_L + G_R^2/H_R - G^2/H``; with unit hessians this is
the variance-reduction criterion of least-squares boosting.
"""
import numpy as np
from numba import njit

LOSS_SQUARED = 0
LOSS_LOGISTIC = 1


@njit(cache=True, error_model="numpy")
def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@njit(cache=True, error_model="numpy")
def _grad_hess(y, F, loss, g, h):
    n = y.shape[0]
    for i in range(n):
        if loss == LOSS_SQUARED:
            g[i] = F[i] - y[i]
            h[i] = 1.0
        else:
            pr = _sigmoid(F[i])
            g[i] = pr - y[i]
            h[i] = max(pr * (1.0 - pr), 1e-12)


@njit(cache=True, error_model="numpy")
def _build_tree(X, order, xs, g, h, max_depth, min_leaf, feat, thr, val, leaf):
    n, p = X.shape
    n_nodes = feat.shape[0]
    node = np.zeros(n, dtype=np.int64)
    G = np.zeros(n_nodes)
    H = np.zeros(n_nodes)
    C = np.zeros(n_nodes, dtype=np.int64)
    for k in range(n_nodes):
        leaf[k] = True
        feat[k] = -1
        val[k] = 0.0
    for i in range(n):
        G[0] += g[i]
        H[0] += h[i]
        C[0] += 1

    best_gain = np.zeros(n_nodes)
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    GL = np.zeros(n_nodes)
    HL = np.zeros(n_nodes)
    CL = np.zeros(n_nodes, dtype=np.int64)
    last = np.zeros(n_nodes)

    for depth in range(max_depth):
        lo = 2**depth - 1
        hi = 2 ** (depth + 1) - 1
        any_active = False
        for k in range(lo, hi):
            best_gain[k] = 1e-12 * (abs(G[k]) + H[k])
            best_feat[k] = -1
            if C[k] >= 2 * min_leaf:
                any_active = True
        if not any_active:
            break
        for f in range(p):
            for k in range(lo, hi):
                GL[k] = 0.0
                HL[k] = 0.0
                CL[k] = 0
            of = order[f]
            xf = xs[f]
            for s in range(n):
                i = of[s]
                k = node[i]
                if k < lo or C[k] < 2 * min_leaf:
                    continue
                x = xf[s]
                c = CL[k]
                if c >= min_leaf and C[k] - c >= min_leaf and x > last[k]:
                    gl = GL[k]
                    hl = HL[k]
                    gr = G[k] - gl
                    hr = H[k] - hl
                    gain = gl * gl / hl + gr * gr / hr - G[k] * G[k] / H[k]
                    if gain > best_gain[k]:
                        best_gain[k] = gain
                        best_feat[k] = f
                        best_thr[k] = 0.5 * (last[k] + x)
                        if best_thr[k] >= x:  # midpoint rounding between adjacent floats
                            best_thr[k] = last[k]
                GL[k] += g[i]
                HL[k] += h[i]
                CL[k] = c + 1
                last[k] = x
        split_any = False
        for k in range(lo, hi):
            if best_feat[k] >= 0:
                leaf[k] = False
                feat[k] = best_feat[k]
                thr[k] = best_thr[k]
                split_any = True
        if not split_any:
            break
        for i in range(n):
            k = node[i]
            if k >= lo and not leaf[k]:
                child = 2 * k + 1 if X[i, feat[k]] <= thr[k] else 2 * k + 2
                node[i] = child
                G[child] += g[i]
                H[child] += h[i]
                C[child] += 1
    for k in range(n_nodes):
        if leaf[k] and H[k] > 0:
            val[k] = -G[k] / H[k]
    return node


@njit(cache=True, error_model="numpy")
def _boost(X, y, loss, base, n_trees, max_depth, min_leaf, lr):
    n, p = X.shape
    n_nodes = 2 ** (max_depth + 1) - 1
    feat = np.full((n_trees, n_nodes), -1, dtype=np.int64)
    thr = np.zeros((n_trees, n_nodes))
    val = np.zeros((n_trees, n_nodes))
    leaf = np.ones((n_trees, n_nodes), dtype=np.bool_)
    order = np.empty((p, n), dtype=np.int64)
    xs = np.empty((p, n))
    for f in range(p):
        order[f] = np.argsort(X[:, f], kind="mergesort")
        for s in range(n):
            xs[f, s] = X[order[f, s], f]
    F = np.full(n, base)
    g = np.empty(n)
    h = np.empty(n)
    for t in range(n_trees):
        _grad_hess(y, F, loss, g, h)
        node = _build_tree(X, order, xs, g, h, max_depth, min_leaf, feat[t], thr[t], val[t], leaf[t])
        for k in range(n_nodes):
            val[t, k] *= lr
        for i in range(n):
            F[i] += val[t, node[i]]
    return feat, thr, val, leaf, F


@njit(cache=True, error_model="numpy")
def _predict(X, base, feat, thr, val, leaf):
    n = X.shape[0]
    n_trees = feat.shape[0]
    out = np.full(n, base)
    for i in range(n):
        s = 0.0
        for t in range(n_trees):
            k = 0
            while not leaf[t, k]:
                if X[i, feat[t, k]] <= thr[t, k]:
                    k = 2 * k + 1
                else:
                    k = 2 * k + 2
            s += val[t, k]
        out[i] += s
    return out


def boost(X, y, loss, n_trees, max_depth, min_leaf, learning_rate):
    """Fit a boosted ensemble; returns (base, arrays, in-sample raw scores)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if loss == LOSS_SQUARED:
        base = float(np.mean(y))
    else:
        q = float(np.clip(np.mean(y), 1e-6, 1 - 1e-6))
        base = float(np.log(q / (1 - q)))
    feat, thr, val, leaf, F = _boost(
        X, y, loss, base, int(n_trees), int(max_depth), int(min_leaf), float(learning_rate)
    )
    return base, (feat, thr, val, leaf), F


def predict_raw(X, base, arrays):
    X = np.ascontiguousarray(X, dtype=np.float64)
    return _predict(X, base, *arrays)
