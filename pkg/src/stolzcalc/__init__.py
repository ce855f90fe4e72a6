"""Numerical functional calculus on generalized Stolz domains.

Finite-dimensional Ritt-type operators, contour-integral holomorphic
calculus, Rademacher square functions, and a Franks-McIntosh style
decomposition, together with a verification harness and CLI.
"""

from .geometry import (
    StolzDomain,
    UnimodularVertexSet,
    boundary_path,
    is_e_large_enough,
    quadrature_nodes,
    tangent_points,
)
from .operators import FiniteOperator

__all__ = [
    "StolzDomain",
    "UnimodularVertexSet",
    "FiniteOperator",
    "boundary_path",
    "is_e_large_enough",
    "quadrature_nodes",
    "tangent_points",
]

__version__ = "0.1.0"
