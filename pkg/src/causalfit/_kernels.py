"""Compiled inner loops: elastic-net coordinate descent and CART tree growing."""
import numpy as np
from numba import njit

# ----------------------------------------------------------- coordinate descent


@njit(cache=True)
def _soft(z, g):
    if z > g:
        return z - g
    if z < -g:
        return z + g
    return 0.0


@njit(cache=True)
def enet_cd(X, y, w, lam, alpha, beta, b0, tol, max_sweeps):
    """Weighted elastic-net least squares by cyclic coordinate descent.

    Minimises ``0.5 * sum_i w_i (y_i - b0 - x_i'beta)^2
    + lam * (alpha * |beta|_1 + (1 - alpha) / 2 * |beta|^2)``.
    ``X`` should be Fortran-ordered. ``beta`` is updated in place (warm start);
    returns ``(b0, sweeps)``. Converged when the largest coefficient change in a
    full sweep is below ``tol``.
    """
    n, p = X.shape
    sw = 0.0
    for i in range(n):
        sw += w[i]
    v = np.zeros(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += w[i] * X[i, j] * X[i, j]
        v[j] = s
    r = np.empty(n)
    for i in range(n):
        s = y[i] - b0
        for j in range(p):
            s -= X[i, j] * beta[j]
        r[i] = s
    l1 = lam * alpha
    l2 = lam * (1.0 - alpha)
    active = np.zeros(p, dtype=np.bool_)
    sweeps = 0
    full = True
    while sweeps < max_sweeps:
        sweeps += 1
        s = 0.0
        for i in range(n):
            s += w[i] * r[i]
        d0 = s / sw
        b0 += d0
        for i in range(n):
            r[i] -= d0
        maxd = abs(d0)
        for j in range(p):
            if v[j] == 0.0 or (not full and not active[j]):
                continue
            bj = beta[j]
            g = 0.0
            for i in range(n):
                g += w[i] * X[i, j] * r[i]
            g += v[j] * bj
            nb = _soft(g, l1) / (v[j] + l2)
            if nb != bj:
                d = nb - bj
                for i in range(n):
                    r[i] -= d * X[i, j]
                beta[j] = nb
                if abs(d) > maxd:
                    maxd = abs(d)
            if nb != 0.0:
                active[j] = True
        if maxd < tol:
            if full:
                break
            full = True  # verify convergence with a full sweep
        else:
            full = False
    return b0, sweeps


@njit(cache=True)
def enet_logistic(X, y, lam, alpha, beta, b0, tol, dev_tol, max_outer, max_sweeps):
    """Penalised logistic regression by IRLS outer loop with CD inner solves.

    Objective is mean negative log-likelihood plus the elastic-net penalty.
    Returns ``(b0, outer_iterations, converged)``.
    """
    n, p = X.shape
    eta = np.empty(n)
    w = np.empty(n)
    z = np.empty(n)
    dev_old = np.inf
    converged = False
    it = 0
    for it in range(1, max_outer + 1):
        dev = 0.0
        for i in range(n):
            s = b0
            for j in range(p):
                s += X[i, j] * beta[j]
            eta[i] = s
            pr = 1.0 / (1.0 + np.exp(-s))
            if pr < 1e-5:
                pr = 1e-5
            elif pr > 1.0 - 1e-5:
                pr = 1.0 - 1e-5
            wi = pr * (1.0 - pr)
            w[i] = wi / n
            z[i] = s + (y[i] - pr) / wi
            if y[i] > 0.5:
                dev -= 2.0 * np.log(pr)
            else:
                dev -= 2.0 * np.log(1.0 - pr)
        if abs(dev - dev_old) / (abs(dev) + 0.1) < dev_tol:
            converged = True
            break
        dev_old = dev
        b0, _ = enet_cd(X, z, w, lam, alpha, beta, b0, tol, max_sweeps)
    return b0, it, converged


# ------------------------------------------------------------------------ trees


@njit(cache=True)
def seed(s):
    np.random.seed(s)


@njit(cache=True)
def _grow(X, is_bin, y, num, den, samples, max_depth, min_leaf, mtry, shuffle,
          feat, thr, left, right, value, node0):
    """Grow one tree on ``samples`` (indices into X, repeats allowed).

    Splits minimise squared error of ``y``; node values are ``sum(num) / sum(den)``.
    Columns flagged in ``is_bin`` hold only 0/1 and are scanned without sorting.
    Nodes are written from position ``node0``; returns the next free position.
    """
    m_total = samples.size
    q = X.shape[1]
    feats = np.arange(q)
    vals = np.empty(m_total)
    tmp = np.empty(m_total, dtype=np.int64)
    st_start = np.empty(2 * m_total + 2, dtype=np.int64)
    st_end = np.empty(2 * m_total + 2, dtype=np.int64)
    st_depth = np.empty(2 * m_total + 2, dtype=np.int64)
    st_node = np.empty(2 * m_total + 2, dtype=np.int64)
    top = 0
    st_start[0] = 0
    st_end[0] = m_total
    st_depth[0] = 0
    st_node[0] = node0
    nxt = node0 + 1
    top = 1
    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        node = st_node[top]
        m = end - start
        snum = 0.0
        sden = 0.0
        sy = 0.0
        ymin = np.inf
        ymax = -np.inf
        for k in range(start, end):
            s = samples[k]
            snum += num[s]
            sden += den[s]
            sy += y[s]
            if y[s] < ymin:
                ymin = y[s]
            if y[s] > ymax:
                ymax = y[s]
        value[node] = snum / sden if sden > 0.0 else 0.0
        feat[node] = -1
        if (max_depth >= 0 and depth >= max_depth) or m < 2 * min_leaf or ymin == ymax:
            continue
        best_gain = -np.inf
        best_f = -1
        best_t = 0.0
        visited = 0
        if shuffle:
            for a in range(q - 1):
                b = a + np.random.randint(0, q - a)
                t = feats[a]
                feats[a] = feats[b]
                feats[b] = t
        for fi in range(q):
            f = feats[fi]
            if is_bin[f]:
                s1 = 0.0
                n1 = 0
                for k in range(start, end):
                    s = samples[k]
                    if X[s, f] > 0.5:
                        s1 += y[s]
                        n1 += 1
                if n1 == 0 or n1 == m:
                    continue
                visited += 1
                n0 = m - n1
                if n0 >= min_leaf and n1 >= min_leaf:
                    s0 = sy - s1
                    gain = s0 * s0 / n0 + s1 * s1 / n1
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_t = 0.5
                if visited >= mtry:
                    break
                continue
            for k in range(m):
                vals[k] = X[samples[start + k], f]
            order = np.argsort(vals[:m])
            if vals[order[0]] == vals[order[m - 1]]:
                continue
            visited += 1
            sl = 0.0
            for i in range(m - 1):
                sl += y[samples[start + order[i]]]
                nl = i + 1
                if nl < min_leaf:
                    continue
                if m - nl < min_leaf:
                    break
                if vals[order[i]] == vals[order[i + 1]]:
                    continue
                sr = sy - sl
                gain = sl * sl / nl + sr * sr / (m - nl)
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_t = 0.5 * (vals[order[i]] + vals[order[i + 1]])
                    if best_t == vals[order[i + 1]]:
                        best_t = vals[order[i]]
            if visited >= mtry:
                break
        if best_f < 0:
            continue
        nl = 0
        for k in range(start, end):
            if X[samples[k], best_f] <= best_t:
                tmp[nl] = samples[k]
                nl += 1
        nr = nl
        for k in range(start, end):
            if X[samples[k], best_f] > best_t:
                tmp[nr] = samples[k]
                nr += 1
        for k in range(m):
            samples[start + k] = tmp[k]
        feat[node] = best_f
        thr[node] = best_t
        left[node] = nxt
        right[node] = nxt + 1
        st_start[top] = start + nl
        st_end[top] = end
        st_depth[top] = depth + 1
        st_node[top] = nxt + 1
        top += 1
        st_start[top] = start
        st_end[top] = start + nl
        st_depth[top] = depth + 1
        st_node[top] = nxt
        top += 1
        nxt += 2
    return nxt


@njit(cache=True)
def _predict_one(X, i, root, feat, thr, left, right, value):
    node = root
    while feat[node] >= 0:
        if X[i, feat[node]] <= thr[node]:
            node = left[node]
        else:
            node = right[node]
    return value[node]


@njit(cache=True)
def grow_forest(X, is_bin, y, n_trees, max_depth, min_leaf, mtry, bootstrap):
    n, q = X.shape
    cap = n_trees * (2 * n + 1)
    feat = np.empty(cap, dtype=np.int64)
    thr = np.zeros(cap)
    left = np.zeros(cap, dtype=np.int64)
    right = np.zeros(cap, dtype=np.int64)
    value = np.zeros(cap)
    roots = np.empty(n_trees, dtype=np.int64)
    ones = np.ones(n)
    pos = 0
    for t in range(n_trees):
        if bootstrap:
            samples = np.random.randint(0, n, n).astype(np.int64)
        else:
            samples = np.arange(n)
        roots[t] = pos
        pos = _grow(X, is_bin, y, y, ones, samples, max_depth, min_leaf, mtry, mtry < q,
                    feat, thr, left, right, value, pos)
    return feat[:pos], thr[:pos], left[:pos], right[:pos], value[:pos], roots


@njit(cache=True)
def predict_forest(X, feat, thr, left, right, value, roots):
    n = X.shape[0]
    out = np.zeros(n)
    T = roots.size
    for i in range(n):
        s = 0.0
        for t in range(T):
            s += _predict_one(X, i, roots[t], feat, thr, left, right, value)
        out[i] = s / T
    return out


@njit(cache=True)
def grow_boosting(X, is_bin, y, n_rounds, rate, max_depth, min_leaf, logistic):
    """Gradient boosting with squared-error (or logistic, Newton leaf values) loss.

    Returns the tree arrays, the tree roots and the initial score.
    """
    n, q = X.shape
    cap = n_rounds * (2 * n + 1)
    feat = np.empty(cap, dtype=np.int64)
    thr = np.zeros(cap)
    left = np.zeros(cap, dtype=np.int64)
    right = np.zeros(cap, dtype=np.int64)
    value = np.zeros(cap)
    roots = np.empty(n_rounds, dtype=np.int64)
    ybar = y.mean()
    if logistic:
        ybar = min(max(ybar, 1e-6), 1 - 1e-6)
        f0 = np.log(ybar / (1 - ybar))
    else:
        f0 = ybar
    F = np.full(n, f0)
    r = np.empty(n)
    h = np.ones(n)
    pos = 0
    for t in range(n_rounds):
        for i in range(n):
            if logistic:
                pr = 1.0 / (1.0 + np.exp(-F[i]))
                r[i] = y[i] - pr
                h[i] = max(pr * (1.0 - pr), 1e-12)
            else:
                r[i] = y[i] - F[i]
        roots[t] = pos
        samples = np.arange(n)
        pos = _grow(X, is_bin, r, r, h, samples, max_depth, min_leaf, q, False,
                    feat, thr, left, right, value, pos)
        for i in range(n):
            F[i] += rate * _predict_one(X, i, roots[t], feat, thr, left, right, value)
    return feat[:pos], thr[:pos], left[:pos], right[:pos], value[:pos], roots, f0


@njit(cache=True)
def predict_boosting(X, feat, thr, left, right, value, roots, f0, rate):
    n = X.shape[0]
    out = np.full(n, f0)
    for i in range(n):
        s = 0.0
        for t in range(roots.size):
            s += _predict_one(X, i, roots[t], feat, thr, left, right, value)
        out[i] += rate * s
    return out
