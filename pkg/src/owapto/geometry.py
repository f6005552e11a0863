"""Euclidean projections and the Moreau-smoothed OWA.

The smoothed OWA is the upper (sup-convolution) envelope of the concave OWA:

    owa_beta(y) = max_v  OWA_w(v) - ||v - y||^2 / (2 beta)
                = min_{q in P(w)}  q.y + (beta/2) ||q||^2

where ``P(w)`` is the permutahedron of ``w``.  Its gradient is the minimizer
``q* = proj_{P(w)}(-y / beta)``.
"""

from dataclasses import dataclass
import itertools

import numpy as np

from . import kernels
from .owa import _raw

MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class Permutahedron:
    """Convex hull of all permutations of ``base``."""

    base: np.ndarray

    def __post_init__(self):
        base = np.array(self.base, dtype=np.float64).reshape(-1)
        base.flags.writeable = False
        object.__setattr__(self, "base", base)

    @property
    def m(self):
        return self.base.shape[0]

    def contains(self, p, tol=MEMBERSHIP_TOL):
        # majorization: equal sums, partial sums of the k largest dominated
        p = np.asarray(p, dtype=np.float64)
        if p.shape != self.base.shape:
            return False
        top_p = np.cumsum(np.sort(p)[::-1])
        top_b = np.cumsum(np.sort(self.base)[::-1])
        if abs(top_p[-1] - top_b[-1]) > tol:
            return False
        return bool(np.all(top_p[:-1] <= top_b[:-1] + tol))

    def vertices(self):
        """All distinct permutations of ``base`` (factorial; small m only)."""
        return np.array(sorted(set(itertools.permutations(self.base.tolist()))))

    def project(self, v):
        return project_permutahedron(self.base, v)


@dataclass(frozen=True)
class SmoothingParam:
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")


def _beta(beta):
    if isinstance(beta, SmoothingParam):
        return float(beta.beta)
    beta = float(beta)
    if not beta > 0:
        raise ValueError("beta must be positive")
    return beta


def _base(P):
    return P.base if isinstance(P, Permutahedron) else _raw(P)


def project_simplex(v):
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    return kernels.simplex_project(v)


def simplex_projection_jacobian(v):
    """Jacobian of ``project_simplex`` at ``v`` (active-set linear map)."""
    p = project_simplex(v)
    s = (p > 0).astype(np.float64)
    k = s.sum()
    return np.diag(s) - np.outer(s, s) / k


def project_permutahedron(P, v, return_structure=False):
    """Projection onto the permutahedron of ``P`` via isotonic regression.

    With ``return_structure`` also returns ``(order, labels)``: the stable
    descending order of ``v`` and the pooled isotonic blocks in that order,
    which together determine the (piecewise-constant) Jacobian.
    """
    base = _base(P)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != base.shape:
        raise ValueError(f"dimension mismatch: base {base.shape}, v {v.shape}")
    w_desc = np.ascontiguousarray(np.sort(base)[::-1])
    p, order, labels = kernels.perm_project(w_desc, np.ascontiguousarray(v))
    if return_structure:
        return p, order, labels
    return p


def _block_average(order, labels):
    m = order.shape[0]
    B = np.zeros((m, m))
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        B[np.ix_(idx, idx)] = 1.0 / idx.size
    # back to original coordinates: rows/cols indexed by order
    out = np.zeros((m, m))
    out[np.ix_(order, order)] = B
    return out


def permutahedron_projection_jacobian(P, v):
    """``d proj / d v = I - (pooled-block averaging, unsorted)``; symmetric."""
    _, order, labels = project_permutahedron(P, v, return_structure=True)
    return np.eye(order.shape[0]) - _block_average(order, labels)


def moreau_owa_gradient(w, y, beta):
    """Gradient of the smoothed OWA: ``proj_{P(w)}(-y / beta)``."""
    beta = _beta(beta)
    y = np.asarray(y, dtype=np.float64)
    return project_permutahedron(w, -y / beta)


def moreau_owa_value(w, y, beta):
    beta = _beta(beta)
    y = np.asarray(y, dtype=np.float64)
    p = moreau_owa_gradient(w, y, beta)
    return float(p @ y + 0.5 * beta * (p @ p))


def moreau_owa_hessian(w, y, beta):
    """``-(1/beta) J`` with ``J`` the projection Jacobian at ``-y/beta``."""
    beta = _beta(beta)
    y = np.asarray(y, dtype=np.float64)
    return -permutahedron_projection_jacobian(w, -y / beta) / beta
