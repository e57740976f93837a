"""
Pseudo-hyperboloid geometry kernel.

This package contains the manifold primitives: the pseudo-Euclidean
inner product, membership, the diffeomorphism psi to sphere x Euclidean,
log/exp maps at the origin and projection back onto the manifold.
"""

from .manifold import PseudoHyperboloid, safe_norm, sphere_exp, sphere_log
from .ops import (
    cosine,
    diffeo_exp_o,
    diffeo_log_o,
    manifold_of,
    on_manifold,
    origin,
    project_to_q,
    ps_inner,
    ps_norm,
    psi,
    psi_inv,
    sph_exp,
    sph_log,
    tangent_inner,
)
from .policy import NumericPolicy, get_policy, numeric_policy, set_policy
from .types import (
    Curvature,
    ProductPoint,
    PseudoPoint,
    Signature,
    TangentVector,
    as_curvature,
    as_tensor,
)

__all__ = [
    # Types
    "Signature",
    "Curvature",
    "PseudoPoint",
    "ProductPoint",
    "TangentVector",
    "as_curvature",
    "as_tensor",
    # Policy
    "NumericPolicy",
    "get_policy",
    "set_policy",
    "numeric_policy",
    # Tensor-level manifold
    "PseudoHyperboloid",
    "sphere_log",
    "sphere_exp",
    "safe_norm",
    # Typed operations
    "ps_inner",
    "on_manifold",
    "psi",
    "psi_inv",
    "sph_log",
    "sph_exp",
    "diffeo_log_o",
    "diffeo_exp_o",
    "project_to_q",
    "ps_norm",
    "tangent_inner",
    "origin",
    "manifold_of",
    "cosine",
]
