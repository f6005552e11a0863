"""Hot loops.

Every kernel here is written in the numba-compatible subset of Python.  With
numba enabled (the default) they are compiled by :func:`owapto._accel.njit`;
with ``OWAPTO_DISABLE_NUMBA=1`` the two leaf primitives switch to vectorized
numpy formulations and the composite loops run as ordinary Python on top of
them.  Both leaf variants stay importable under explicit names
(``*_loop`` / ``*_numpy``) so tests and the benchmark can compare them.

Conventions shared by all kernels: float64 arrays, weights ``w_desc`` already
sorted in decreasing order, ties broken by a stable sort.
"""

import numpy as np

from ._accel import NUMBA_ENABLED, njit

# ---------------------------------------------------------------------------
# isotonic regression (nonincreasing), unit weights


def pav_nonincreasing_loop(y):
    """Pool-adjacent-violators fit of a nonincreasing sequence.

    Returns ``(fit, labels)`` where ``labels[i]`` is the pooled block index of
    position ``i``.  Blocks are merged only on a strict violation.
    """
    m = y.shape[0]
    starts = np.empty(m, dtype=np.int64)
    sums = np.empty(m, dtype=np.float64)
    counts = np.empty(m, dtype=np.int64)
    nb = 0
    for i in range(m):
        starts[nb] = i
        sums[nb] = y[i]
        counts[nb] = 1
        nb += 1
        while nb > 1 and sums[nb - 2] * counts[nb - 1] < sums[nb - 1] * counts[nb - 2]:
            sums[nb - 2] += sums[nb - 1]
            counts[nb - 2] += counts[nb - 1]
            nb -= 1
    fit = np.empty(m, dtype=np.float64)
    labels = np.empty(m, dtype=np.int64)
    for b in range(nb):
        mean = sums[b] / counts[b]
        for i in range(starts[b], starts[b] + counts[b]):
            fit[i] = mean
            labels[i] = b
    return fit, labels


def pav_nonincreasing_numpy(y):
    """Min-max closed form of the same fit, O(m^2) memory, no Python loop.

    ``fit_i = min_{k<=i} max_{j>=i} mean(y[k..j])``.
    """
    y = np.asarray(y, dtype=np.float64)
    m = y.shape[0]
    csum = np.concatenate(([0.0], np.cumsum(y)))
    k = np.arange(m)[:, None]
    j = np.arange(m)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        means = (csum[j + 1] - csum[k]) / (j - k + 1)
    means = np.where(j >= k, means, -np.inf)
    tail_max = np.maximum.accumulate(means[:, ::-1], axis=1)[:, ::-1]
    tail_max = np.where(j >= k, tail_max, np.inf)
    fit = tail_max.min(axis=0)
    # pooled blocks are runs of equal fitted values
    scale = max(1.0, float(np.max(np.abs(fit))) if m else 1.0)
    new_block = np.concatenate(([True], np.abs(np.diff(fit)) > 1e-13 * scale))
    labels = np.cumsum(new_block) - 1
    return fit, labels.astype(np.int64)


# ---------------------------------------------------------------------------
# Euclidean projection onto the probability simplex


def simplex_project_loop(v):
    n = v.shape[0]
    u = np.sort(v)[::-1]
    css = 0.0
    theta = 0.0
    for j in range(n):
        css += u[j]
        t = (css - 1.0) / (j + 1)
        if u[j] - t > 0.0:
            theta = t
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        d = v[i] - theta
        out[i] = d if d > 0.0 else 0.0
    return out


def simplex_project_numpy(v):
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.shape[0] + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


if NUMBA_ENABLED:
    _pav = njit(pav_nonincreasing_loop)
    _simplex = njit(simplex_project_loop)
else:
    _pav = pav_nonincreasing_numpy
    _simplex = simplex_project_numpy

pav_nonincreasing = _pav
simplex_project = _simplex


# ---------------------------------------------------------------------------
# permutahedron projection


@njit
def perm_project(w_desc, v):
    """Project ``v`` onto conv{permutations of w_desc}.

    Returns ``(p, order, labels)``: ``order`` is the stable descending sort of
    ``v`` and ``labels`` the pooled blocks of the isotonic fit in that order.
    """
    m = v.shape[0]
    order = np.argsort(-v, kind="mergesort")
    s = np.empty(m, dtype=np.float64)
    for i in range(m):
        s[i] = v[order[i]] - w_desc[i]
    fit, labels = _pav(s)
    p = np.empty(m, dtype=np.float64)
    for i in range(m):
        p[order[i]] = v[order[i]] - fit[i]
    return p, order, labels


@njit
def _moreau_grad(w_desc, y, beta):
    return perm_project(w_desc, -y / beta)[0]


@njit
def _owa_sorted(w_desc, y):
    ys = np.sort(y)
    total = 0.0
    for j in range(y.shape[0]):
        total += w_desc[j] * ys[j]
    return total


# ---------------------------------------------------------------------------
# simplex solvers for max_x OWA(Cx)


@njit
def psg_owa_simplex(w_desc, C, alpha, iters, decay, x0):
    """Projected subgradient ascent; returns (best_x, best_val, last_step)."""
    m, n = C.shape
    CT = np.ascontiguousarray(C.T)
    x = x0.copy()
    best_x = x.copy()
    best_val = _owa_sorted(w_desc, C @ x)
    step = alpha
    gy = np.empty(m, dtype=np.float64)
    for k in range(iters):
        y = C @ x
        order = np.argsort(y, kind="mergesort")
        for j in range(m):
            gy[order[j]] = w_desc[j]
        g = CT @ gy
        step = alpha / np.sqrt(k + 1.0) if decay else alpha
        x = _simplex(x + step * g)
        val = _owa_sorted(w_desc, C @ x)
        if val > best_val:
            best_val = val
            best_x = x.copy()
    return best_x, best_val, step


@njit
def fw_moreau_simplex(w_desc, C, beta, iters, x0):
    """Frank-Wolfe on the smoothed objective.

    Returns (best_x, best_val, last_gamma, last_gap); the gap is the FW
    duality gap ``max_i g_i - g.x`` at the final iterate.
    """
    m, n = C.shape
    CT = np.ascontiguousarray(C.T)
    x = x0.copy()
    best_x = x.copy()
    best_val = -np.inf
    gamma = 1.0
    gap = np.inf
    for k in range(iters + 1):
        y = C @ x
        p = _moreau_grad(w_desc, y, beta)
        val = p @ y + 0.5 * beta * (p @ p)
        if val > best_val:
            best_val = val
            best_x = x.copy()
        if k == iters:
            break
        g = CT @ p
        i = np.argmax(g)
        gap = g[i] - g @ x
        gamma = 2.0 / (k + 2.0)
        x = (1.0 - gamma) * x
        x[i] += gamma
    return best_x, best_val, gamma, gap


@njit
def pgd_moreau_simplex(w_desc, C, beta, alpha, iters, tol, x0):
    """Projected gradient ascent until ``||U(x) - x||_inf <= tol``.

    Returns (x, iterations_used, residual).
    """
    CT = np.ascontiguousarray(C.T)
    x = x0.copy()
    res = np.inf
    it = 0
    for it in range(1, iters + 1):
        p = _moreau_grad(w_desc, C @ x, beta)
        xn = _simplex(x + alpha * (CT @ p))
        res = np.max(np.abs(xn - x))
        x = xn
        if res <= tol:
            break
    return x, it, res


@njit
def apg_moreau_simplex(w_desc, C, beta, alpha, iters, tol, x0):
    """Accelerated projected gradient ascent with gradient-based restart.

    Stops once the plain projected-gradient residual ``||U(x) - x||_inf``
    drops to ``tol``.  Returns (x, iterations_used, residual).
    """
    CT = np.ascontiguousarray(C.T)
    x = x0.copy()
    v = x0.copy()
    t = 1.0
    res = np.inf
    it = 0
    for it in range(1, iters + 1):
        xn = _simplex(v + alpha * (CT @ _moreau_grad(w_desc, C @ v, beta)))
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        # restart when the momentum direction stops being an ascent direction
        if (xn - x) @ (xn - v) < 0.0:
            tn = 1.0
            v = xn.copy()
        else:
            v = xn + ((t - 1.0) / tn) * (xn - x)
        x = xn
        t = tn
        if it % 10 == 0 or it == iters:
            u = _simplex(x + alpha * (CT @ _moreau_grad(w_desc, C @ x, beta)))
            res = np.max(np.abs(u - x))
            if res <= tol:
                break
    return x, it, res


# ---------------------------------------------------------------------------
# fair ranking: Frank-Wolfe with Moreau smoothing over the Birkhoff polytope


@njit
def fw_fair_ranking(y_hat, group_of, n_groups, b, lam, w_desc, beta0, T):
    n = y_hat.shape[0]
    Pi = np.zeros((n, n), dtype=np.float64)
    order = np.argsort(-y_hat, kind="mergesort")
    for j in range(n):
        Pi[order[j], j] = 1.0
    mu_hat = np.empty(n, dtype=np.float64)
    for k in range(1, T + 1):
        expo = Pi @ b
        eg = np.zeros(n_groups, dtype=np.float64)
        for i in range(n):
            eg[group_of[i]] += expo[i]
        beta = beta0 / np.sqrt(k + 1.0)
        mu_g = _moreau_grad(w_desc, eg, beta)
        for i in range(n):
            mu_hat[i] = (1.0 - lam) * y_hat[i] + lam * mu_g[group_of[i]]
        order = np.argsort(-mu_hat, kind="mergesort")
        a = k / (k + 2.0)
        Pi *= a
        for j in range(n):
            Pi[order[j], j] += 1.0 - a
    return Pi


# ---------------------------------------------------------------------------
# grid graphs (4-neighbourhood, row-major node ids)


@njit
def dijkstra_grid(cost, rows, cols, source, sink):
    """Node-weighted shortest path; path cost sums every visited node.

    Dense O(N^2) selection with lowest-index tie breaking.  Returns
    ``(indicator, total_cost)``; ``total_cost`` is ``inf`` if unreachable.
    """
    N = rows * cols
    dist = np.full(N, np.inf)
    prev = np.full(N, -1, dtype=np.int64)
    done = np.zeros(N, dtype=np.bool_)
    dist[source] = cost[source]
    dr = np.array([-1, 0, 0, 1])
    dc = np.array([0, -1, 1, 0])
    for _ in range(N):
        u = -1
        best = np.inf
        for v in range(N):
            if not done[v] and dist[v] < best:
                best = dist[v]
                u = v
        if u == -1 or u == sink:
            break
        done[u] = True
        r = u // cols
        c = u % cols
        for t in range(4):
            rr = r + dr[t]
            cc = c + dc[t]
            if rr < 0 or rr >= rows or cc < 0 or cc >= cols:
                continue
            v = rr * cols + cc
            nd = dist[u] + cost[v]
            if not done[v] and nd < dist[v]:
                dist[v] = nd
                prev[v] = u
    ind = np.zeros(N, dtype=np.float64)
    if not np.isfinite(dist[sink]):
        return ind, np.inf
    v = sink
    while v != -1:
        ind[v] = 1.0
        v = prev[v]
    return ind, dist[sink]


@njit
def _owa_cost(w_desc, y):
    # sum_j w_j * (j-th largest y); equals -OWA_w(-y)
    ys = np.sort(y)
    m = y.shape[0]
    total = 0.0
    for j in range(m):
        total += w_desc[j] * ys[m - 1 - j]
    return total


@njit
def owa_path_search(C, w_desc, rows, cols, source, sink, to_go, inc_path, inc_val):
    """Exact min over simple source-sink paths of ``sum_j w_j (Cx)_[j]``.

    Depth-first branch and bound.  ``to_go[s, v]`` must lower-bound the cost
    species ``s`` still pays once it enters node ``v`` (``v`` and the sink
    included); ``(inc_path, inc_val)`` is any achievable incumbent.  Costs
    must be positive.  Returns ``(indicator, value, nodes_expanded)``.
    """
    m, N = C.shape
    dr = np.array([-1, 0, 0, 1])
    dc = np.array([0, -1, 1, 0])
    path = np.empty(N, dtype=np.int64)
    nxt = np.zeros(N, dtype=np.int64)
    acc = np.zeros((N, m), dtype=np.float64)
    visited = np.zeros(N, dtype=np.bool_)
    best_val = inc_val
    best_path = inc_path.copy()
    bound = np.empty(m, dtype=np.float64)
    depth = 0
    path[0] = source
    visited[source] = True
    for s in range(m):
        acc[0, s] = C[s, source]
    expanded = 0
    while depth >= 0:
        u = path[depth]
        t = nxt[depth]
        if t >= 4:
            visited[u] = False
            depth -= 1
            continue
        nxt[depth] = t + 1
        r = u // cols + dr[t]
        c = u % cols + dc[t]
        if r < 0 or r >= rows or c < 0 or c >= cols:
            continue
        v = r * cols + c
        if visited[v]:
            continue
        expanded += 1
        for s in range(m):
            bound[s] = acc[depth, s] + to_go[s, v]
        val = _owa_cost(w_desc, bound)
        if val >= best_val:
            continue
        if v == sink:
            best_val = val
            best_path[:] = 0.0
            for d in range(depth + 1):
                best_path[path[d]] = 1.0
            best_path[sink] = 1.0
            continue
        depth += 1
        path[depth] = v
        nxt[depth] = 0
        visited[v] = True
        for s in range(m):
            acc[depth, s] = acc[depth - 1, s] + C[s, v]
    return best_path, best_val, expanded


@njit
def grid_cost_to_go(cost, rows, cols, sink):
    """Cheapest cost from each node to the sink, counting the sink, not the node."""
    N = rows * cols
    dist = np.full(N, np.inf)
    done = np.zeros(N, dtype=np.bool_)
    dist[sink] = 0.0
    dr = np.array([-1, 0, 0, 1])
    dc = np.array([0, -1, 1, 0])
    for _ in range(N):
        u = -1
        best = np.inf
        for v in range(N):
            if not done[v] and dist[v] < best:
                best = dist[v]
                u = v
        if u == -1:
            break
        done[u] = True
        r = u // cols
        c = u % cols
        for t in range(4):
            rr = r + dr[t]
            cc = c + dc[t]
            if rr < 0 or rr >= rows or cc < 0 or cc >= cols:
                continue
            v = rr * cols + cc
            # entering u from v costs cost[u]
            nd = dist[u] + cost[u]
            if not done[v] and nd < dist[v]:
                dist[v] = nd
    return dist


# ---------------------------------------------------------------------------
# dense interior-point method for small convex QPs


@njit
def _max_step(v, dv):
    a = 1.0
    for i in range(v.shape[0]):
        if dv[i] < 0.0:
            r = -v[i] / dv[i]
            if r < a:
                a = r
    return a


@njit
def _ipm_direction(Q, G, A, s, lam, W, rd, rp, re, rc):
    nv = Q.shape[0]
    ne = A.shape[0]
    K = np.zeros((nv + ne, nv + ne))
    K[:nv, :nv] = Q + G.T @ (W.reshape(-1, 1) * G)
    K[:nv, nv:] = A.T
    K[nv:, :nv] = A
    rhs = np.empty(nv + ne)
    rhs[:nv] = -rd - G.T @ ((rc + lam * rp) / s)
    rhs[nv:] = -re
    sol = np.linalg.solve(K, rhs)
    du = sol[:nv].copy()
    dnu = sol[nv:].copy()
    ds = -rp - G @ du
    dlam = (rc - lam * ds) / s
    return du, ds, dlam, dnu


@njit
def qp_ipm(Q, q, G, h, A, b, tol, max_iter):
    """Mehrotra predictor-corrector for ``min 1/2 u'Qu + q'u, Gu <= h, Au = b``.

    Returns ``(u, s, lam, nu, iterations, scaled_residual)``.  Raises on a
    singular Newton system; callers fall back to a least-squares variant.
    """
    ni = G.shape[0]
    u = A.T @ np.linalg.solve(A @ A.T, b)
    s = np.maximum(h - G @ u, 1.0)
    lam = np.ones(ni)
    nu = np.zeros(A.shape[0])
    scale = max(1.0, np.abs(Q).max(), np.abs(G).max(), np.abs(q).max())
    res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        rd = Q @ u + q + G.T @ lam + A.T @ nu
        rp = G @ u + s - h
        re = A @ u - b
        mu = (s @ lam) / ni
        res = max(np.abs(rd).max(), np.abs(rp).max(), np.abs(re).max(), mu) / scale
        if res <= tol:
            break
        W = lam / s
        du, ds, dlam, dnu = _ipm_direction(Q, G, A, s, lam, W, rd, rp, re, -s * lam)
        a_aff = min(_max_step(s, ds), _max_step(lam, dlam))
        mu_aff = ((s + a_aff * ds) @ (lam + a_aff * dlam)) / ni
        sigma = (mu_aff / mu) ** 3
        rc = -s * lam - ds * dlam + sigma * mu
        du, ds, dlam, dnu = _ipm_direction(Q, G, A, s, lam, W, rd, rp, re, rc)
        a = 0.99 * min(_max_step(s, ds), _max_step(lam, dlam))
        u = u + a * du
        s = s + a * ds
        lam = lam + a * dlam
        nu = nu + a * dnu
    return u, s, lam, nu, it, res
