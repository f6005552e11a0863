"""Ordered weighted averages: values, subgradients, fair weights."""

from dataclasses import dataclass, field

import numpy as np

SUM_TOL = 1e-12


@dataclass(frozen=True)
class OwaWeights:
    """OWA weight vector ``w`` (nonnegative, sums to one).

    ``fair=True`` additionally asserts strictly decreasing entries.  Invalid
    weights raise instead of being renormalized.
    """

    w: np.ndarray
    fair: bool = False

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64).reshape(-1)
        if w.size == 0:
            raise ValueError("OWA weights must be non-empty")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("OWA weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"OWA weights must sum to 1 (got {w.sum()!r})")
        if self.fair and np.any(np.diff(w) >= 0):
            raise ValueError("fair OWA weights must be strictly decreasing")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    def __len__(self):
        return self.w.shape[0]

    @property
    def m(self):
        return self.w.shape[0]

    @property
    def descending(self):
        return np.sort(self.w)[::-1].copy()


@dataclass(frozen=True)
class SortPermutation:
    """Stable ascending sort of a criteria vector and its inverse."""

    sigma: np.ndarray
    sigma_inv: np.ndarray = field(repr=False)

    @classmethod
    def of(cls, y):
        sigma = np.argsort(np.asarray(y, dtype=np.float64), kind="stable")
        inv = np.empty_like(sigma)
        inv[sigma] = np.arange(sigma.size)
        return cls(sigma, inv)


def as_weights(w):
    if isinstance(w, OwaWeights):
        return w
    return OwaWeights(np.asarray(w, dtype=np.float64))


def _raw(w):
    return w.w if isinstance(w, OwaWeights) else np.asarray(w, dtype=np.float64)


def _check_criteria(w, y):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != w.shape[0]:
        raise ValueError(f"dimension mismatch: weights {w.shape[0]}, criteria {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("criteria must be finite")
    return y


def owa_value(w, y):
    """``w . sort_ascending(y)``."""
    w = _raw(w)
    y = _check_criteria(w, y)
    return float(w @ np.sort(y))


def owa_subgradient(w, y):
    """Weight of each entry's ascending rank (stable ties).

    A supergradient of the concave OWA at ``y``; the gradient when entries
    are distinct.
    """
    w = _raw(w)
    y = _check_criteria(w, y)
    g = np.empty_like(y)
    g[SortPermutation.of(y).sigma] = w
    return g


def fair_gini_weights(m):
    """Normalized squared Gini weights ``w_j ∝ ((m+1-j)/m)^2``, j = 1..m."""
    if int(m) != m or m < 1:
        raise ValueError("m must be a positive integer")
    m = int(m)
    raw = ((m + 1 - np.arange(1, m + 1)) / m) ** 2
    w = raw / raw.sum()
    return OwaWeights(w, fair=m > 1)


def _check_matrix(C, x=None):
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] < 1 or C.shape[1] < 1:
        raise ValueError(f"criteria matrix must be 2-D and non-empty, got {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("criteria matrix must be finite")
    if x is not None:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (C.shape[1],):
            raise ValueError(f"shape mismatch: C {C.shape}, x {x.shape}")
        return C, x
    return C


def owa_of_decision(w, C, x):
    """``OWA_w(C x)``."""
    C, x = _check_matrix(C, x)
    return owa_value(w, C @ x)


def owa_decision_subgradient(w, C, x):
    """``C^T owa_subgradient(w, C x)``."""
    C, x = _check_matrix(C, x)
    return C.T @ owa_subgradient(w, C @ x)
