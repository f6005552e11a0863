"""Backward routes through the optimization layers.

Cotangent convention: ``g`` is the derivative of a scalar loss with respect to
the layer output; the routes return the derivative of that same loss with
respect to the layer input.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geometry
from .owa import owa_value
from .solvers import (
    GridGraph,
    moreau_step_size,
    solve_fair_ranking_fw,
    solve_owa_moreau,
    solve_owa_qp_reformulation,
    solve_shortest_path,
    RANK_BETA0,
    RANK_TEST_ITERS,
)

FIXED_POINT_TOL = 1e-6
DAMPING = 0.99
ACTIVE_TOL = 1e-6
LAMBDA_BB = 20.0


@dataclass
class FixedPointJacobians:
    """``Phi = dU/dx`` (n x n) and ``Psi = dU/dvec(C)`` (n x mn, row-major C)."""

    Phi: np.ndarray
    Psi: np.ndarray

    @classmethod
    def at(cls, w, C, x, beta, alpha=None):
        C = np.asarray(C, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        m, n = C.shape
        alpha = moreau_step_size(C, beta) if alpha is None else float(alpha)
        p, Jp, Js = _pieces(w, C, x, beta, alpha)
        Phi = Js @ (np.eye(n) - (alpha / beta) * C.T @ Jp @ C)
        Psi = np.empty((n, m * n))
        for k in range(m):
            for l in range(n):
                col = -(x[l] / beta) * (C.T @ Jp[:, k])
                col[l] += p[k]
                Psi[:, k * n + l] = alpha * (Js @ col)
        return cls(Phi, Psi)

    def spectral_radius(self):
        return float(np.max(np.abs(np.linalg.eigvals(self.Phi))))

    def solution_jacobian(self):
        """``dx*/dvec(C) = (I - Phi)^-1 Psi``."""
        return np.linalg.solve(np.eye(self.Phi.shape[0]) - self.Phi, self.Psi)


@dataclass
class VectorJacobianHook:
    """Forward solution plus a pull-back from output to input cotangents."""

    solution: np.ndarray
    backward: Callable
    saved: dict = field(default_factory=dict)

    def __call__(self, g):
        return self.backward(g)


def _pieces(w, C, x, beta, alpha):
    y = C @ x
    v = -y / beta
    p = geometry.moreau_owa_gradient(w, y, beta)
    Jp = geometry.permutahedron_projection_jacobian(w, v)
    u0 = x + alpha * (C.T @ p)
    Js = geometry.simplex_projection_jacobian(u0)
    return p, Jp, Js


def backward_fixed_point(w, C, x_star, g, beta, alpha=None, return_info=False):
    """Cotangent on ``C`` through the smoothed solution map ``C -> x*``.

    Differentiates the projected-gradient map
    ``U(x, C) = proj_simplex(x + alpha C^T grad_smoothed(Cx))`` at its fixed
    point: solves ``(I - Phi)^T u = g`` and returns ``Psi^T u`` without
    forming ``Psi``.  If ``I - Phi`` is singular a damped system
    ``I - 0.99 Phi`` is used and ``info["damped"]`` is set.
    """
    C = np.asarray(C, dtype=np.float64)
    x = np.asarray(x_star, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    m, n = C.shape
    if x.shape != (n,) or g.shape != (n,):
        raise ValueError("x_star and g must have length n")
    beta = geometry._beta(beta)
    alpha = moreau_step_size(C, beta) if alpha is None else float(alpha)
    info = {"damped": False, "residual": float("nan")}
    if not np.any(g):
        out = np.zeros_like(C)
        return (out, info) if return_info else out
    p, Jp, Js = _pieces(w, C, x, beta, alpha)
    info["residual"] = float(np.max(np.abs(geometry.project_simplex(x + alpha * (C.T @ p)) - x)))
    Phi = Js @ (np.eye(n) - (alpha / beta) * C.T @ Jp @ C)
    M = np.eye(n) - Phi
    if np.linalg.cond(M) > 1e12:
        M = np.eye(n) - DAMPING * Phi
        info["damped"] = True
    u = np.linalg.solve(M.T, g)
    r = Js @ u
    out = alpha * (np.outer(p, r) - np.outer(Jp @ (C @ r), x) / beta)
    return (out, info) if return_info else out


def moreau_layer(w, C, beta, **solve_kw):
    """Forward smoothed solve plus its fixed-point backward hook."""
    rep = solve_owa_moreau(w, C, beta, **solve_kw)
    x = rep.solution

    def backward(g):
        return backward_fixed_point(w, C, x, g, beta)

    return VectorJacobianHook(x, backward, {"report": rep})


def backward_qp_kkt(report, g, return_info=False):
    """Cotangent on ``C`` through the smoothed OWA QP via its KKT system.

    ``report`` is the output of ``solve_owa_qp_reformulation``.  The KKT
    conditions are linearized on the active set (slack <= 1e-6); a
    rank-deficient system is solved by least squares and flagged.
    """
    info_in = report.info
    C = info_in["C"]
    eps = info_in["epsilon"]
    Wp = info_in["permuted_weights"]
    lam = info_in["duals"]
    m, n = C.shape
    n_perm = Wp.shape[0]
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (n,):
        raise ValueError("g must have length n")
    info = {"rank_deficient": False}
    if not np.any(g):
        out = np.zeros_like(C)
        return (out, info) if return_info else out
    x = info_in["x_raw"]
    z = info_in["z"]
    active = info_in["active"]
    act_perm = np.flatnonzero(active[:n_perm])
    act_bound = np.flatnonzero(active[n_perm:])
    nv = n + 1
    Q = np.zeros((nv, nv))
    Q[:n, :n] = 2 * eps * (np.eye(n) + C.T @ C)
    Q[n, n] = 2 * eps
    rows = []
    for t in act_perm:
        r = np.zeros(nv)
        r[:n] = -(Wp[t] @ C)
        r[n] = 1.0
        rows.append(r)
    for i in act_bound:
        r = np.zeros(nv)
        r[i] = -1.0
        rows.append(r)
    eq = np.zeros(nv)
    eq[:n] = 1.0
    rows.append(eq)
    G = np.array(rows)
    k = G.shape[0]
    K = np.zeros((nv + k, nv + k))
    K[:nv, :nv] = Q
    K[:nv, nv:] = G.T
    K[nv:, :nv] = G
    rhs = np.zeros(nv + k)
    rhs[:n] = g
    if np.linalg.matrix_rank(K) < K.shape[0]:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        info["rank_deficient"] = True
    else:
        sol = np.linalg.solve(K, rhs)
    ru = sol[:n]
    r_perm = sol[nv:nv + act_perm.size]
    lam_perm = lam[act_perm]
    Wa = Wp[act_perm]
    y = C @ x
    grad = 2 * eps * (np.outer(y, ru) + np.outer(C @ ru, x))
    grad -= np.outer(Wa.T @ lam_perm, ru)
    grad -= np.outer(Wa.T @ r_perm, x)
    info["z"] = z
    out = -grad
    return (out, info) if return_info else out


def qp_layer(w, C, epsilon):
    rep = solve_owa_qp_reformulation(w, C, epsilon)
    return VectorJacobianHook(rep.solution, lambda g: backward_qp_kkt(rep, g), {"report": rep})


def backward_blackbox_lp(graph, c_hat, g, lambda_bb=LAMBDA_BB, x_hat=None):
    """Blackbox cotangent on path costs ``c_hat`` for a loss minimized in ``x``.

    ``g = dL/dx``; returns ``(x*(c_hat + lambda g) - x*(c_hat)) / lambda``,
    the gradient of the piecewise-linear interpolation of ``L(x*(c))``.
    """
    if not lambda_bb > 0:
        raise ValueError("lambda_bb must be positive")
    g = np.asarray(g, dtype=np.float64)
    if not np.any(g):
        return np.zeros_like(np.asarray(c_hat, dtype=np.float64))
    c_hat = np.asarray(c_hat, dtype=np.float64)
    if x_hat is None:
        x_hat = solve_shortest_path(graph, c_hat)
    x_pert = solve_shortest_path(graph, c_hat + lambda_bb * g)
    return (x_pert - x_hat) / lambda_bb


def spo_plus_subgradient(gamma_hat, gamma_true, solver):
    """``v*(2 gamma_hat - gamma) - v*(gamma)`` for a linear maximizer ``solver``.

    This is half the gradient of ``spo_plus_loss``; the factor is absorbed by
    the learning rate.
    """
    gamma_hat = np.asarray(gamma_hat, dtype=np.float64)
    gamma_true = np.asarray(gamma_true, dtype=np.float64)
    return np.asarray(solver(2 * gamma_hat - gamma_true)) - np.asarray(solver(gamma_true))


def spo_plus_loss(gamma_hat, gamma_true, solver):
    """SPO+ surrogate for maximization problems (nonnegative, zero at truth)."""
    gamma_hat = np.asarray(gamma_hat, dtype=np.float64)
    gamma_true = np.asarray(gamma_true, dtype=np.float64)
    va = np.asarray(solver(2 * gamma_hat - gamma_true))
    vb = np.asarray(solver(gamma_true))
    return float(np.sum((2 * gamma_hat - gamma_true) * va) - 2 * np.sum(gamma_hat * vb)
                 + np.sum(gamma_true * vb))


def simplex_maximizer(gamma):
    """Vertex of the simplex maximizing ``gamma . v`` (lowest index on ties)."""
    v = np.zeros_like(np.asarray(gamma, dtype=np.float64))
    v[np.argmax(gamma)] = 1.0
    return v


def grid_maximizer(graph):
    """Linear maximizer over grid paths: ``argmax gamma . x = argmin (-gamma) . x``."""
    if not isinstance(graph, GridGraph):
        raise TypeError("need a GridGraph")
    return lambda gamma: solve_shortest_path(graph, -np.asarray(gamma))


def _rank_solve(c, groups, b, lam, w, beta0, T):
    Pi = solve_fair_ranking_fw(c, groups, b, lam, w, beta0=beta0, T=T).Pi
    bias = b.b if hasattr(b, "b") else np.asarray(b, dtype=np.float64)
    return Pi, bias


def spo_plus_for_owa_rank(c_hat, c_true, groups, b, lam, w, beta0=RANK_BETA0, T=RANK_TEST_ITERS):
    """c-block of the SPO+ subgradient for the fair ranking program.

    The joint variable is ``(Pi, y, z)`` with ``y = A Pi b`` and
    ``z = OWA(y)``; its linear objective is ``gamma = ((1-lam) c b^T, 0, lam)``.
    Two fair-ranking solves give ``(1 - lam) (Pi_a - Pi_b) b``.
    """
    c_hat = np.asarray(c_hat, dtype=np.float64)
    c_true = np.asarray(c_true, dtype=np.float64)
    Pi_a, bias = _rank_solve(2 * c_hat - c_true, groups, b, lam, w, beta0, T)
    Pi_b, _ = _rank_solve(c_true, groups, b, lam, w, beta0, T)
    return (1 - lam) * ((Pi_a - Pi_b) @ bias)


def spo_plus_rank_loss(c_hat, c_true, groups, b, lam, w, beta0=RANK_BETA0, T=RANK_TEST_ITERS):
    c_hat = np.asarray(c_hat, dtype=np.float64)
    c_true = np.asarray(c_true, dtype=np.float64)
    A = groups.A
    Pi_a, bias = _rank_solve(2 * c_hat - c_true, groups, b, lam, w, beta0, T)
    Pi_b, _ = _rank_solve(c_true, groups, b, lam, w, beta0, T)
    z_a = owa_value(w, A @ Pi_a @ bias)
    z_b = owa_value(w, A @ Pi_b @ bias)
    top = (1 - lam) * ((2 * c_hat - c_true) @ Pi_a @ bias) + lam * z_a
    at_hat = (1 - lam) * (c_hat @ Pi_b @ bias) + lam * z_b
    at_true = (1 - lam) * (c_true @ Pi_b @ bias) + lam * z_b
    return float(top - 2 * at_hat + at_true)


__all__ = [
    "FixedPointJacobians", "VectorJacobianHook", "backward_fixed_point", "moreau_layer",
    "backward_qp_kkt", "qp_layer", "backward_blackbox_lp", "spo_plus_subgradient",
    "spo_plus_loss", "simplex_maximizer", "grid_maximizer", "spo_plus_for_owa_rank",
    "spo_plus_rank_loss",
]
