"""Forward solvers for the OWA programs used in training and evaluation.

Regions: the probability simplex (portfolio), node-weighted grid paths
(shortest path), and the Birkhoff polytope (fair ranking).
"""

from dataclasses import dataclass, field
import itertools
import math

import numpy as np

from . import kernels
from .geometry import (
    moreau_owa_gradient,
    moreau_owa_hessian,
    moreau_owa_value,
    project_simplex,
)
from .owa import _check_matrix, _raw, owa_value

# paper step size and per-m iteration counts for the smoothed forward pass
DEFAULT_STEP = 0.02
DEFAULT_ITERS = {3: 300, 5: 500, 7: 750}
MAX_QP_CRITERIA = 6


def default_iters(m):
    if m in DEFAULT_ITERS:
        return DEFAULT_ITERS[m]
    return int(round(75 + 75 * m if m < 7 else 750 + 125 * (m - 7)))


class SolverError(RuntimeError):
    pass


class CapacityError(ValueError):
    """Raised when the factorial QP reformulation is requested for m > 6."""


@dataclass
class SolveReport:
    solution: np.ndarray
    objective: float
    iterations: int
    step_size: float
    residual: float
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FeasibleRegion:
    """Tagged decision set: ``simplex`` (payload n), ``grid`` (GridGraph),
    ``birkhoff`` (payload n)."""

    kind: str
    payload: object

    def __post_init__(self):
        if self.kind in ("simplex", "birkhoff"):
            if int(self.payload) < 1:
                raise ValueError(f"{self.kind} dimension must be >= 1")
        elif self.kind == "grid":
            if not isinstance(self.payload, GridGraph):
                raise TypeError("grid region needs a GridGraph payload")
        else:
            raise ValueError(f"unknown region kind {self.kind!r}")

    @classmethod
    def simplex(cls, n):
        return cls("simplex", int(n))

    @classmethod
    def birkhoff(cls, n):
        return cls("birkhoff", int(n))

    @classmethod
    def grid(cls, graph):
        return cls("grid", graph)

    def contains(self, x, tol=1e-8):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "simplex":
            return x.shape == (self.payload,) and x.min() >= -tol and abs(x.sum() - 1) <= tol
        if self.kind == "birkhoff":
            return RankingPolicy.is_doubly_stochastic(x, tol)
        g = self.payload
        flow = g.edge_flow(x)
        return np.allclose(g.incidence() @ flow, g.supply(), atol=tol)


# ---------------------------------------------------------------------------
# simplex: max_x OWA_w(Cx)


def _w_desc(w):
    return np.ascontiguousarray(np.sort(_raw(w))[::-1])


def _prep(w, C):
    C = np.ascontiguousarray(_check_matrix(C))
    wd = _w_desc(w)
    if wd.shape[0] != C.shape[0]:
        raise ValueError(f"{wd.shape[0]} weights for {C.shape[0]} criteria")
    return wd, C


def solve_owa_projected_subgradient(w, C, iters=None, alpha=DEFAULT_STEP, decay=False, x0=None):
    """Projected subgradient ascent on OWA(Cx) over the simplex; best iterate."""
    wd, C = _prep(w, C)
    m, n = C.shape
    iters = default_iters(m) if iters is None else int(iters)
    if iters < 1:
        raise ValueError("iters must be >= 1")
    x0 = np.full(n, 1.0 / n) if x0 is None else np.asarray(x0, dtype=np.float64)
    x, val, step = kernels.psg_owa_simplex(wd, C, float(alpha), iters, bool(decay), x0)
    if not np.isfinite(val):
        raise SolverError("projected subgradient diverged (non-finite objective)")
    return SolveReport(x, float(val), iters, float(step), float("nan"))


def solve_owa_reference(w, C):
    """Tighter projected-subgradient run used for regret references.

    Three warm-started phases: constant step 0.1, decaying step 0.1/sqrt(k),
    then the default constant step.  The best iterate over all phases wins.
    """
    phases = ((1000, 0.1, False), (2000, 0.1, True), (2000, DEFAULT_STEP, False))
    best, x0 = None, None
    for iters, alpha, decay in phases:
        rep = solve_owa_projected_subgradient(w, C, iters=iters, alpha=alpha, decay=decay, x0=x0)
        if best is None or rep.objective > best.objective:
            best = rep
        x0 = best.solution
    return best


def solve_owa_moreau_frankwolfe(w, C, beta, iters=None, x0=None):
    """Frank-Wolfe on the Moreau-smoothed OWA over the simplex.

    Reports the best iterate; ``residual`` is the final FW duality gap.
    """
    wd, C = _prep(w, C)
    m, n = C.shape
    beta = float(beta)
    if not beta > 0:
        raise ValueError("beta must be positive")
    iters = default_iters(m) if iters is None else int(iters)
    x0 = np.full(n, 1.0 / n) if x0 is None else np.asarray(x0, dtype=np.float64)
    x, val, gamma, gap = kernels.fw_moreau_simplex(wd, C, beta, iters, x0)
    if not np.isfinite(val):
        raise SolverError("Frank-Wolfe produced a non-finite objective")
    return SolveReport(x, float(val), iters, float(gamma), float(gap))


def moreau_step_size(C, beta):
    """Safe projected-gradient step ``beta / ||C||_2^2`` (inverse smoothness)."""
    return float(beta) / max(np.linalg.norm(C, 2) ** 2, 1e-12)


def fixed_point_residual(w, C, beta, x, alpha):
    g = np.asarray(C).T @ moreau_owa_gradient(w, np.asarray(C) @ x, beta)
    return float(np.max(np.abs(project_simplex(x + alpha * g) - x)))


def refine_moreau_solution(w, C, beta, x0, tol=1e-12, max_iter=20000, alpha=None):
    """Drive ``x0`` to a fixed point of the projected-gradient map.

    Accelerated projected gradient ascent identifies the active face; Newton
    steps on that face (the smoothed objective is piecewise quadratic) then
    finish the job.  Returns ``(x, residual)`` with the residual measured at
    step ``alpha``.
    """
    wd, C = _prep(w, C)
    alpha = moreau_step_size(C, beta) if alpha is None else float(alpha)
    x = np.asarray(x0, dtype=np.float64)
    res = fixed_point_residual(w, C, beta, x, alpha)
    for _ in range(20):
        if res <= tol:
            break
        x, _, _ = kernels.apg_moreau_simplex(wd, C, float(beta), alpha, int(max_iter) // 20,
                                             max(tol, 1e-10), x)
        res = fixed_point_residual(w, C, beta, x, alpha)
        x, res = _newton_polish(w, C, beta, x, alpha, res, tol)
    return x, res


def _newton_polish(w, C, beta, x, alpha, res, tol):
    for _ in range(10):
        if res <= tol:
            break
        S = np.flatnonzero(x > 0)
        y = C @ x
        g = C.T @ moreau_owa_gradient(w, y, beta)
        H = C[:, S].T @ moreau_owa_hessian(w, y, beta) @ C[:, S]
        k = S.size
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = H
        K[:k, k] = 1.0
        K[k, :k] = 1.0
        rhs = np.concatenate([-g[S], [0.0]])
        d = np.linalg.lstsq(K, rhs, rcond=None)[0][:k]
        xn = x.copy()
        xn[S] += d
        if np.any(xn[S] < 0):
            break
        xn /= xn.sum()
        rn = fixed_point_residual(w, C, beta, xn, alpha)
        if rn >= res:
            break
        x, res = xn, rn
    return x, res


def solve_owa_moreau(w, C, beta, iters=None, refine=True, tol=1e-12, max_iter=20000):
    """Frank-Wolfe forward pass followed (optionally) by fixed-point refinement."""
    rep = solve_owa_moreau_frankwolfe(w, C, beta, iters)
    if not refine:
        return rep
    C = np.asarray(C, dtype=np.float64)
    alpha = moreau_step_size(C, beta)
    x, res = refine_moreau_solution(w, C, beta, rep.solution, tol=tol, alpha=alpha,
                                    max_iter=max_iter)
    return SolveReport(x, moreau_owa_value(w, C @ x, beta), rep.iterations, alpha, res,
                       {"fw_gap": rep.residual})


# ---------------------------------------------------------------------------
# the factorial LP/QP reformulation


def permuted_weights(w):
    """All ``m!`` permutations of the weight vector, one per row."""
    w = _raw(w)
    return np.array([w[list(t)] for t in itertools.permutations(range(w.shape[0]))])


def qp_constraint_count(m):
    return math.factorial(int(m))


def _qp_ipm(Q, q, G, h, A, b, tol=1e-10, max_iter=100):
    """Fallback of :func:`kernels.qp_ipm` that survives singular Newton systems."""
    nv, ni, ne = Q.shape[0], G.shape[0], A.shape[0]
    u = np.zeros(nv)
    u_ls = np.linalg.lstsq(A, b, rcond=None)[0]
    u[:] = u_ls
    s = np.maximum(h - G @ u, 1.0)
    lam = np.ones(ni)
    nu = np.zeros(ne)
    scale = max(1.0, np.abs(Q).max(initial=0.0), np.abs(G).max(), np.abs(q).max())

    def residuals(u, s, lam, nu):
        rd = Q @ u + q + G.T @ lam + A.T @ nu
        rp = G @ u + s - h
        re = A @ u - b
        return rd, rp, re

    def solve(W, rd, rp, re, rc):
        # rc: complementarity target, S dlam + Lam ds = rc
        H = Q + G.T @ (W[:, None] * G)
        K = np.zeros((nv + ne, nv + ne))
        K[:nv, :nv] = H
        K[:nv, nv:] = A.T
        K[nv:, :nv] = A
        r1 = -rd - G.T @ ((rc + lam * rp) / s)
        rhs = np.concatenate([r1, -re])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        du, dnu = sol[:nv], sol[nv:]
        ds = -rp - G @ du
        dlam = (rc - lam * ds) / s
        return du, ds, dlam, dnu

    def max_step(v, dv):
        neg = dv < 0
        if not np.any(neg):
            return 1.0
        return min(1.0, float(np.min(-v[neg] / dv[neg])))

    res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        rd, rp, re = residuals(u, s, lam, nu)
        mu = s @ lam / ni
        res = max(np.abs(rd).max(initial=0.0), np.abs(rp).max(initial=0.0),
                  np.abs(re).max(initial=0.0), mu) / scale
        if res <= tol:
            break
        W = lam / s
        du, ds, dlam, dnu = solve(W, rd, rp, re, -s * lam)
        a_aff = min(max_step(s, ds), max_step(lam, dlam))
        mu_aff = (s + a_aff * ds) @ (lam + a_aff * dlam) / ni
        sigma = (mu_aff / mu) ** 3
        rc = -s * lam - ds * dlam + sigma * mu
        du, ds, dlam, dnu = solve(W, rd, rp, re, rc)
        a = 0.99 * min(max_step(s, ds), max_step(lam, dlam))
        u += a * du
        s += a * ds
        lam += a * dlam
        nu += a * dnu
    return u, s, lam, nu, it, res


def solve_owa_qp_reformulation(w, C, epsilon, tol=1e-10, active_tol=1e-6):
    """Quadratically smoothed OWA LP over the simplex.

    Variables ``(x, y = Cx, z)`` with ``z <= w_tau . y`` for every permutation
    ``tau`` (``m!`` rows); objective ``z - eps (|x|^2 + |y|^2 + z^2)``,
    maximized.  ``epsilon = 0`` gives the plain LP.  ``y`` is eliminated, so
    the interior-point solve runs on ``(x, z)``.
    """
    C = _check_matrix(C)
    w = _raw(w)
    m, n = C.shape
    if w.shape[0] != m:
        raise ValueError(f"{w.shape[0]} weights for {m} criteria")
    if m > MAX_QP_CRITERIA:
        raise CapacityError(
            f"QP reformulation needs m! = {math.factorial(m)} permutation constraints; "
            f"refusing m = {m} > {MAX_QP_CRITERIA}"
        )
    epsilon = float(epsilon)
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    Wp = permuted_weights(w)
    n_perm = Wp.shape[0]
    Q = np.zeros((n + 1, n + 1))
    Q[:n, :n] = 2 * epsilon * (np.eye(n) + C.T @ C)
    Q[n, n] = 2 * epsilon
    q = np.zeros(n + 1)
    q[n] = -1.0
    G = np.zeros((n_perm + n, n + 1))
    G[:n_perm, :n] = -(Wp @ C)
    G[:n_perm, n] = 1.0
    G[n_perm:, :n] = -np.eye(n)
    h = np.zeros(n_perm + n)
    A = np.zeros((1, n + 1))
    A[0, :n] = 1.0
    b = np.ones(1)
    try:
        u, s, lam, nu, it, res = kernels.qp_ipm(Q, q, G, h, A, b, tol, 100)
    except Exception:  # singular Newton system: least-squares steps
        u, s, lam, nu, it, res = _qp_ipm(Q, q, G, h, A, b, tol=tol)
    x = np.maximum(u[:n], 0.0)
    x /= x.sum()
    z = u[n]
    y = C @ x
    obj = z - epsilon * (x @ x + y @ y + z * z)
    info = {
        "z": float(z), "y": y, "duals": lam, "eq_dual": nu, "slack": s,
        "active": s <= active_tol, "epsilon": epsilon, "C": C, "w": w,
        "permuted_weights": Wp, "n_owa_constraints": n_perm,
        "x_raw": u[:n].copy(),
    }
    return SolveReport(x, float(obj), it, float("nan"), float(res), info)


# ---------------------------------------------------------------------------
# grids and shortest paths


@dataclass(frozen=True)
class GridGraph:
    """4-neighbour grid, row-major node ids, edges in both directions."""

    rows: int
    cols: int
    source: int = 0
    sink: int = -1

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs positive dimensions")
        sink = self.sink if self.sink >= 0 else self.rows * self.cols - 1
        object.__setattr__(self, "sink", sink)
        if self.source == sink:
            raise ValueError("source and sink must differ")

    @property
    def n_nodes(self):
        return self.rows * self.cols

    def neighbors(self, v):
        r, c = divmod(v, self.cols)
        for dr, dc in ((-1, 0), (0, -1), (0, 1), (1, 0)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < self.rows and 0 <= cc < self.cols:
                yield rr * self.cols + cc

    def edges(self):
        return [(u, v) for u in range(self.n_nodes) for v in self.neighbors(u)]

    def incidence(self):
        """Node-by-edge matrix: +1 where the edge leaves, -1 where it enters."""
        E = self.edges()
        A = np.zeros((self.n_nodes, len(E)))
        for k, (u, v) in enumerate(E):
            A[u, k] = 1.0
            A[v, k] = -1.0
        return A

    def supply(self):
        b = np.zeros(self.n_nodes)
        b[self.source] = 1.0
        b[self.sink] = -1.0
        return b

    def node_sequence(self, indicator):
        """Walk a chordless path indicator from source to sink."""
        on = set(np.flatnonzero(np.asarray(indicator) > 0.5).tolist())
        seq = [self.source]
        prev = None
        while seq[-1] != self.sink:
            nxt = [v for v in self.neighbors(seq[-1]) if v in on and v != prev and v not in seq]
            if len(nxt) != 1:
                raise ValueError("indicator is not a chordless source-sink path")
            prev = seq[-1]
            seq.append(nxt[0])
        if len(seq) != len(on):
            raise ValueError("indicator has nodes off the path")
        return seq

    def edge_flow(self, indicator):
        seq = self.node_sequence(indicator)
        index = {e: k for k, e in enumerate(self.edges())}
        flow = np.zeros(len(index))
        for u, v in zip(seq[:-1], seq[1:]):
            flow[index[(u, v)]] = 1.0
        return flow

    def node_to_edge_costs(self, node_cost):
        """Tail-node convention: edge (u, v) costs ``node_cost[u]``.

        A path's edge cost plus ``node_cost[sink]`` equals its node cost.
        """
        node_cost = np.asarray(node_cost, dtype=np.float64)
        return np.array([node_cost[u] for u, _ in self.edges()])


CLAMP_MIN = 1e-6


def solve_shortest_path(graph, c, return_cost=False):
    """0/1 node indicator of a cheapest source-sink path (costs clamped >= 1e-6)."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (graph.n_nodes,):
        raise ValueError(f"need {graph.n_nodes} node costs, got {c.shape}")
    cost = np.ascontiguousarray(np.maximum(c, CLAMP_MIN))
    x, total = kernels.dijkstra_grid(cost, graph.rows, graph.cols, graph.source, graph.sink)
    if not np.isfinite(total):
        raise SolverError("sink unreachable")
    return (x, float(total)) if return_cost else x


def solve_owa_path(graph, C, w):
    """Exact ``argmax_x OWA_w(-Cx)`` over simple paths by branch and bound.

    Returns ``(indicator, owa_value)``.  Cost rows are clamped to >= 1e-6.
    """
    C = np.ascontiguousarray(np.maximum(np.asarray(C, dtype=np.float64), CLAMP_MIN))
    wd = _w_desc(w)
    m, N = C.shape
    if N != graph.n_nodes or wd.shape[0] != m:
        raise ValueError("shape mismatch between graph, costs and weights")
    to_go = np.empty((m, N))
    for s in range(m):
        to_go[s] = kernels.grid_cost_to_go(C[s], graph.rows, graph.cols, graph.sink) + C[s]
    # incumbent: best of the per-species and summed shortest paths
    best_x, best_val = None, np.inf
    for c in list(C) + [C.sum(axis=0)]:
        x = solve_shortest_path(graph, c)
        val = float(np.sort(C @ x)[::-1] @ wd)
        if val < best_val:
            best_x, best_val = x, val
    x, val, _ = kernels.owa_path_search(C, wd, graph.rows, graph.cols, graph.source,
                                        graph.sink, to_go, best_x, best_val)
    return x, -float(val)


def enumerate_simple_paths(graph):
    """All simple source-sink paths as node indicators (tiny grids only)."""
    out = []

    def dfs(v, seen):
        if v == graph.sink:
            ind = np.zeros(graph.n_nodes)
            ind[list(seen)] = 1.0
            out.append(ind)
            return
        for u in graph.neighbors(v):
            if u not in seen:
                seen.add(u)
                dfs(u, seen)
                seen.remove(u)

    dfs(graph.source, {graph.source})
    return np.array(out)


# ---------------------------------------------------------------------------
# ranking over the Birkhoff polytope


@dataclass(frozen=True)
class GroupStructure:
    """Partition of ``n`` items into groups; ``group_of[i]`` is item i's group."""

    group_of: np.ndarray
    n_groups: int

    def __post_init__(self):
        g = np.asarray(self.group_of, dtype=np.int64).reshape(-1)
        if g.size and (g.min() < 0 or g.max() >= self.n_groups):
            raise ValueError("group ids out of range")
        g.flags.writeable = False
        object.__setattr__(self, "group_of", g)

    @property
    def n(self):
        return self.group_of.shape[0]

    @property
    def A(self):
        """``|G| x n`` stacked group indicator rows."""
        A = np.zeros((self.n_groups, self.n))
        A[self.group_of, np.arange(self.n)] = 1.0
        return A

    @classmethod
    def from_quantiles(cls, feature, n_groups):
        """Evenly spaced quantile groups of ``feature`` (sizes differ by <= 1)."""
        feature = np.asarray(feature, dtype=np.float64)
        n = feature.shape[0]
        rank = np.empty(n, dtype=np.int64)
        rank[np.argsort(feature, kind="stable")] = np.arange(n)
        return cls((rank * n_groups) // n, int(n_groups))


@dataclass(frozen=True)
class PositionBias:
    b: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=np.float64).reshape(-1)
        if np.any(b <= 0) or np.any(np.diff(b) >= 0):
            raise ValueError("position bias must be positive and strictly decreasing")
        b.flags.writeable = False
        object.__setattr__(self, "b", b)

    @classmethod
    def dcg(cls, n):
        return cls(1.0 / np.log2(1.0 + np.arange(1, n + 1)))


@dataclass(frozen=True)
class RankingPolicy:
    """Doubly stochastic ``Pi[i, j]`` = P(item i at position j)."""

    Pi: np.ndarray

    def __post_init__(self):
        Pi = np.array(self.Pi, dtype=np.float64)
        if not self.is_doubly_stochastic(Pi):
            raise ValueError("ranking policy must be doubly stochastic")
        Pi.flags.writeable = False
        object.__setattr__(self, "Pi", Pi)

    @staticmethod
    def is_doubly_stochastic(Pi, tol=1e-8):
        Pi = np.asarray(Pi, dtype=np.float64)
        if Pi.ndim != 2 or Pi.shape[0] != Pi.shape[1]:
            return False
        return bool(
            Pi.min() >= -tol and Pi.max() <= 1 + tol
            and np.allclose(Pi.sum(axis=0), 1, atol=tol)
            and np.allclose(Pi.sum(axis=1), 1, atol=tol)
        )

    def exposures(self, b):
        return self.Pi @ _bias(b)


def _bias(b):
    return b.b if isinstance(b, PositionBias) else np.asarray(b, dtype=np.float64)


RANK_BETA0 = 1.0
RANK_TRAIN_ITERS = 100
RANK_TEST_ITERS = 500


def solve_fair_ranking_fw(y_hat, groups, b, lam, w, beta0=RANK_BETA0, T=RANK_TEST_ITERS):
    """Frank-Wolfe with Moreau smoothing for the fair ranking program.

    Maximizes ``(1-lam) y_hat' Pi b + lam OWA_w(A Pi b)`` over doubly
    stochastic ``Pi``; smoothing schedule ``beta_k = beta0 / sqrt(k+1)``.
    """
    y_hat = np.ascontiguousarray(y_hat, dtype=np.float64)
    n = y_hat.shape[0]
    if n < 1 or int(T) < 1:
        raise ValueError("need n >= 1 and T >= 1")
    if groups.n != n:
        raise ValueError("group structure does not match item count")
    bias = np.ascontiguousarray(_bias(b))
    if bias.shape != (n,):
        raise ValueError("position bias does not match item count")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    wd = _w_desc(w)
    if wd.shape[0] != groups.n_groups:
        raise ValueError("need one OWA weight per group")
    Pi = kernels.fw_fair_ranking(y_hat, np.ascontiguousarray(groups.group_of), groups.n_groups,
                                 bias, float(lam), wd, float(beta0), int(T))
    return RankingPolicy(Pi)


def fair_ranking_objective(Pi, c, groups, b, lam, w):
    Pi = Pi.Pi if isinstance(Pi, RankingPolicy) else np.asarray(Pi)
    bias = _bias(b)
    return float((1 - lam) * (c @ Pi @ bias) + lam * owa_value(w, groups.A @ Pi @ bias))


def permutation_matrix(order):
    """``P[order[j], j] = 1``: item ``order[j]`` placed at position ``j``."""
    n = len(order)
    P = np.zeros((n, n))
    P[np.asarray(order), np.arange(n)] = 1.0
    return P


def birkhoff_vertices(n):
    return [permutation_matrix(p) for p in itertools.permutations(range(n))]


def birkhoff_argmax(M):
    """``argmax <Pi, M>`` over permutation matrices by enumeration (small n)."""
    M = np.asarray(M, dtype=np.float64)
    best, best_val = None, -np.inf
    for P in birkhoff_vertices(M.shape[0]):
        val = float(np.sum(P * M))
        if val > best_val + 1e-12:
            best, best_val = P, val
    return best


# ---------------------------------------------------------------------------
# brute-force oracle (tests only)


def simplex_grid(n, step):
    """All points of the simplex with coordinates on multiples of ``step``."""
    K = int(round(1.0 / step))
    bars = np.array(list(itertools.combinations(range(K + n - 1), n - 1)), dtype=np.int64)
    if bars.size == 0:
        return np.ones((1, 1))
    padded = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), K + n - 1)])
    return (np.diff(padded, axis=1) - 1) / K


def owa_enumeration_oracle(w, C, grid_step=0.01):
    """Max of OWA(Cx) over a grid of the simplex; returns ``(value, x)``."""
    C = _check_matrix(C)
    X = simplex_grid(C.shape[1], grid_step)
    Y = np.sort(X @ C.T, axis=1)
    vals = Y @ _raw(w)
    i = int(np.argmax(vals))
    return float(vals[i]), X[i]
