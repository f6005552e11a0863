"""Decision-focused learning through ordered weighted averaging programs."""

__version__ = "0.1.0"

from ._accel import backend
from .owa import (
    OwaWeights,
    SortPermutation,
    fair_gini_weights,
    owa_decision_subgradient,
    owa_of_decision,
    owa_subgradient,
    owa_value,
)
from .geometry import (
    Permutahedron,
    SmoothingParam,
    moreau_owa_gradient,
    moreau_owa_value,
    project_permutahedron,
    project_simplex,
)

__all__ = [
    "__version__", "backend", "OwaWeights", "SortPermutation", "fair_gini_weights",
    "owa_decision_subgradient", "owa_of_decision", "owa_subgradient", "owa_value",
    "Permutahedron", "SmoothingParam", "moreau_owa_gradient", "moreau_owa_value",
    "project_permutahedron", "project_simplex",
]
