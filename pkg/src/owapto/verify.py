"""Brute-force and finite-difference self-checks, grouped into suites.

Every check looks functions up through their module at call time, so a
patched implementation is what gets verified.
"""

import itertools
import time

import numpy as np

from . import diff, geometry, owa, solvers

SUITES = ("owa", "geometry", "solvers", "gradients", "rank")


def _distinct_points(rng, m, count, spread=1.0):
    pts = []
    while len(pts) < count:
        y = rng.normal(0, spread, m)
        if m == 1 or np.min(np.diff(np.sort(y))) > 1e-3:
            pts.append(y)
    return pts


def _random_weights(rng, m, fair=True):
    w = np.sort(rng.dirichlet(np.ones(m)))[::-1]
    if fair and m > 1:
        w = w + np.linspace(1e-3, 0, m)
        w /= w.sum()
    return w


def _fd_grad(f, y, h=1e-6):
    g = np.empty_like(y)
    for i in range(y.shape[0]):
        e = np.zeros_like(y)
        e[i] = h
        g[i] = (f(y + e) - f(y - e)) / (2 * h)
    return g


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-8))


# --- owa ------------------------------------------------------------------


def check_min_form(rng):
    worst = 0.0
    for _ in range(200):
        m = int(rng.integers(1, 7))
        w = _random_weights(rng, m, fair=False)
        y = rng.normal(size=m)
        brute = min(np.dot(w[list(p)], y) for p in itertools.permutations(range(m)))
        worst = max(worst, abs(owa.owa_value(w, y) - brute))
    return worst <= 1e-12, f"max |owa - min_perm| = {worst:.2e}"


def check_axioms(rng):
    for _ in range(200):
        m = int(rng.integers(2, 6))
        w = owa.fair_gini_weights(m)
        y = rng.normal(size=m)
        v = owa.owa_value(w, y)
        for p in itertools.permutations(range(m)):
            if abs(owa.owa_value(w, y[list(p)]) - v) > 1e-12:
                return False, "impartiality violated"
        k = rng.integers(m)
        up = y.copy()
        up[k] += rng.uniform(0, 1)
        if owa.owa_value(w, up) < v - 1e-12:
            return False, "monotonicity violated"
        i, j = np.argmax(y), np.argmin(y)
        eps = 0.25 * (y[i] - y[j])
        if eps > 1e-9:
            t = y.copy()
            t[i] -= eps
            t[j] += eps
            if not owa.owa_value(w, t) > v:
                return False, "equitability violated"
    return True, "impartiality, monotonicity, equitability on 200 cases"


def check_subgradient(rng):
    worst = 0.0
    for y in _distinct_points(rng, 4, 50):
        w = _random_weights(rng, 4)
        g = owa.owa_subgradient(w, y)
        worst = max(worst, _rel(g, _fd_grad(lambda t: owa.owa_value(w, t), y)))
        y2 = rng.normal(size=4)
        if owa.owa_value(w, y2) > owa.owa_value(w, y) + g @ (y2 - y) + 1e-12:
            return False, "supergradient inequality violated"
    return worst <= 1e-5, f"max rel err vs finite differences {worst:.2e}"


def check_gini(rng):
    ok = np.allclose(owa.fair_gini_weights(3).w, np.array([9, 4, 1]) / 14)
    ok &= np.allclose(owa.fair_gini_weights(2).w, [0.8, 0.2])
    return bool(ok), "gini weights for m=2,3"


# --- geometry -------------------------------------------------------------


def check_perm_projection(rng):
    worst = -np.inf
    for _ in range(50):
        m = int(rng.integers(2, 6))
        base = _random_weights(rng, m)
        v = rng.normal(0, 2, m)
        p = geometry.project_permutahedron(base, v)
        if not geometry.Permutahedron(base).contains(p):
            return False, "projection left the permutahedron"
        verts = np.array(list(itertools.permutations(base)))
        worst = max(worst, float(np.max((verts - p) @ (v - p))))
    return worst <= 1e-8, f"max variational inequality {worst:.2e}"


def check_simplex_projection(rng):
    worst = -np.inf
    for _ in range(50):
        n = int(rng.integers(1, 7))
        v = rng.normal(0, 2, n)
        p = geometry.project_simplex(v)
        if abs(p.sum() - 1) > 1e-10 or p.min() < 0:
            return False, "projection infeasible"
        worst = max(worst, float(np.max((np.eye(n) - p) @ (v - p))))
    return worst <= 1e-8, f"max variational inequality {worst:.2e}"


def _independent_moreau_value(w, y, beta):
    p = geometry.project_permutahedron(w, -y / beta)
    return float(p @ y + 0.5 * beta * p @ p)


def check_moreau_gradient(rng):
    worst = 0.0
    for _ in range(50):
        m = int(rng.integers(2, 6))
        w = _random_weights(rng, m)
        beta = float(rng.uniform(0.1, 2.0))
        y = rng.normal(size=m)
        g = geometry.moreau_owa_gradient(w, y, beta)
        if not geometry.Permutahedron(w).contains(g):
            return False, "smoothed gradient outside the permutahedron"
        fd = _fd_grad(lambda t: _independent_moreau_value(w, t, beta), y)
        worst = max(worst, _rel(g, fd))
    return worst <= 1e-5, f"max rel err vs finite differences {worst:.2e}"


# --- solvers --------------------------------------------------------------


def check_solver_agreement(rng):
    worst = 0.0
    for _ in range(10):
        m, n = int(rng.integers(1, 4)), int(rng.integers(2, 5))
        w = owa.fair_gini_weights(m)
        C = rng.uniform(0, 1, (m, n))
        a = solvers.solve_owa_reference(w, C).objective
        b = owa.owa_of_decision(w, C, solvers.solve_owa_moreau(w, C, 1e-3).solution)
        c = owa.owa_of_decision(w, C, solvers.solve_owa_qp_reformulation(w, C, 0.0).solution)
        o, _ = solvers.owa_enumeration_oracle(w, C, 0.02)
        worst = max(worst, abs(a - c), abs(b - c))
        if o > c + 1e-9 or c - o > 2 * 0.02 * np.abs(C).sum():
            return False, "grid oracle disagrees with the LP"
    return worst <= 1e-3, f"max pairwise gap {worst:.2e}"


def check_paths(rng):
    g = solvers.GridGraph(3, 4)
    paths = solvers.enumerate_simple_paths(g)
    w = owa.fair_gini_weights(3)
    for _ in range(10):
        c = rng.uniform(0.1, 2, g.n_nodes)
        x, cost = solvers.solve_shortest_path(g, c, return_cost=True)
        if abs(cost - (paths @ c).min()) > 1e-9:
            return False, "shortest path not optimal"
        C = rng.uniform(0.1, 2, (3, g.n_nodes))
        _, val = solvers.solve_owa_path(g, C, w)
        brute = max(owa.owa_value(w, -(C @ p)) for p in paths)
        if abs(val - brute) > 1e-9:
            return False, "OWA path not optimal"
    return True, f"optimal against {len(paths)} enumerated paths"


def check_birkhoff(rng):
    for _ in range(20):
        mu = rng.normal(size=3)
        b = solvers.PositionBias.dcg(3).b
        P = solvers.permutation_matrix(np.argsort(-mu, kind="stable"))
        best = solvers.birkhoff_argmax(np.outer(mu, b))
        if abs(np.sum(P * np.outer(mu, b)) - np.sum(best * np.outer(mu, b))) > 1e-12:
            return False, "argsort vertex is not the linear maximizer"
    return True, "argsort matches vertex enumeration"


# --- gradients ------------------------------------------------------------


def _interior_instance(rng, m, n):
    C = np.eye(m, n) * 0.5 + rng.uniform(0, 0.3, (m, n))
    return C


def _fd_matrix(fun, C, g, h=1e-5):
    out = np.zeros_like(C)
    for idx in np.ndindex(*C.shape):
        E = np.zeros_like(C)
        E[idx] = h
        out[idx] = (g @ fun(C + E) - g @ fun(C - E)) / (2 * h)
    return out


def check_fixed_point_backward(rng):
    worst = 0.0
    for _ in range(5):
        m = int(rng.integers(2, 4))
        n = m
        w = owa.fair_gini_weights(m)
        C = _interior_instance(rng, m, n)
        beta = 0.5
        g = rng.normal(size=n)
        x = solvers.solve_owa_moreau(w, C, beta).solution
        an = diff.backward_fixed_point(w, C, x, g, beta)
        fd = _fd_matrix(lambda D: solvers.solve_owa_moreau(w, D, beta).solution, C, g)
        worst = max(worst, _rel(an, fd))
    if np.any(diff.backward_fixed_point(w, C, x, np.zeros(n), beta)):
        return False, "zero cotangent gave a nonzero gradient"
    return worst <= 1e-3, f"max rel err vs perturb-and-resolve {worst:.2e}"


def check_kkt_backward(rng):
    worst = 0.0
    for _ in range(5):
        m = int(rng.integers(2, 4))
        n = m + 1
        w = owa.fair_gini_weights(m)
        C = _interior_instance(rng, m, n)
        g = rng.normal(size=n)
        rep = solvers.solve_owa_qp_reformulation(w, C, 0.5)
        an = diff.backward_qp_kkt(rep, g)
        fd = _fd_matrix(lambda D: solvers.solve_owa_qp_reformulation(w, D, 0.5).solution, C, g)
        worst = max(worst, _rel(an, fd))
    return worst <= 1e-3, f"max rel err vs perturb-and-resolve {worst:.2e}"


def check_blackbox(rng):
    g = solvers.GridGraph(3, 3)
    c = rng.uniform(0.5, 2, g.n_nodes)
    zero = diff.backward_blackbox_lp(g, c, np.zeros(g.n_nodes), 20.0)
    return not np.any(zero), "zero cotangent maps to zero"


# --- rank -----------------------------------------------------------------


def check_fair_ranking(rng):
    n = 6
    groups = solvers.GroupStructure(np.array([0, 0, 0, 1, 1, 1]), 2)
    b = solvers.PositionBias.dcg(n)
    w = owa.fair_gini_weights(2)
    for lam in (0.0, 0.5, 1.0):
        c = rng.uniform(0, 1, n)
        pol = solvers.solve_fair_ranking_fw(c, groups, b, lam, w, T=50)
        if not solvers.RankingPolicy.is_doubly_stochastic(pol.Pi):
            return False, "policy not doubly stochastic"
    c = np.sort(rng.uniform(0, 1, n))[::-1]
    pol = solvers.solve_fair_ranking_fw(c, groups, b, 0.0, w, T=50)
    if abs(c @ pol.Pi @ b.b - c @ b.b) > 1e-3:
        return False, "lambda = 0 policy is not the sorted ranking"
    return True, "doubly stochastic for all lambda; sorted at lambda = 0"


def check_spo_rank(rng):
    n = 4
    groups = solvers.GroupStructure(np.array([0, 1, 0, 1]), 2)
    b = solvers.PositionBias.dcg(n)
    w = owa.fair_gini_weights(2)
    for lam in (0.0, 0.5):
        c = rng.uniform(0, 1, n)
        g = diff.spo_plus_for_owa_rank(c, c, groups, b, lam, w, T=100)
        if np.max(np.abs(g)) > 1e-4:
            return False, "SPO+ subgradient nonzero at truth"
    return True, "zero at truth"


CHECKS = {
    "owa": [check_min_form, check_axioms, check_subgradient, check_gini],
    "geometry": [check_perm_projection, check_simplex_projection, check_moreau_gradient],
    "solvers": [check_solver_agreement, check_paths, check_birkhoff],
    "gradients": [check_moreau_gradient, check_fixed_point_backward, check_kkt_backward,
                  check_blackbox],
    "rank": [check_fair_ranking, check_spo_rank],
}


def run_verify(suite, seed=0):
    """Run one suite; returns a list of ``(check, passed, detail, seconds)``."""
    if suite not in CHECKS:
        raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    out = []
    for fn in CHECKS[suite]:
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        name = fn.__name__.removeprefix("check_")
        out.append((name, bool(ok), detail, time.perf_counter() - t0))
    return out
