"""
Typed manifold operations on PseudoPoint / ProductPoint / TangentVector.

These are the entry points used by tests, the model's public helpers and
anyone composing geometry by hand. They validate inputs (dimensions,
membership where a precondition demands it) and then delegate to
PseudoHyperboloid for the arithmetic.
"""

import logging
from typing import Optional, Sequence, Union

import torch

from src.utils.errors import DimensionMismatchError
from .manifold import PseudoHyperboloid, safe_norm, sphere_exp, sphere_log
from .policy import get_policy
from .types import (
    CurvatureLike,
    ProductPoint,
    PseudoPoint,
    Signature,
    TangentVector,
    as_curvature,
    as_tensor,
)

logger = logging.getLogger(__name__)

VectorLike = Union[torch.Tensor, PseudoPoint, Sequence[float]]


def manifold_of(x: Union[PseudoPoint, TangentVector]) -> PseudoHyperboloid:
    """The manifold a point or tangent vector belongs to."""
    return PseudoHyperboloid(x.signature, x.curvature)


def _coords(x: VectorLike) -> torch.Tensor:
    return x.coords if isinstance(x, PseudoPoint) else as_tensor(x)


# ============================================================================
# Inner Product and Membership
# ============================================================================

def ps_inner(x: VectorLike, y: VectorLike, sig: Signature) -> torch.Tensor:
    """
    Pseudo-Euclidean inner product: -sum(time*time') + sum(space*space').

    Raises:
        DimensionMismatchError: if either vector does not have sig.ambient_dim coordinates
    """
    xc, yc = _coords(x), _coords(y)
    if xc.shape[-1] != yc.shape[-1]:
        raise DimensionMismatchError(f"ps_inner got lengths {xc.shape[-1]} and {yc.shape[-1]}")
    td = sig.time_dim
    sig.check(xc, "x")
    return (xc[..., td:] * yc[..., td:]).sum(dim=-1) - (xc[..., :td] * yc[..., :td]).sum(dim=-1)


def on_manifold(x: PseudoPoint, tol: Optional[float] = None) -> torch.Tensor:
    """
    Membership test |<x,x> - beta| <= tol * max(1, |beta|), per point.

    Returns a boolean tensor of x's batch shape (a 0-d tensor for a single
    point, usable directly in an if).
    """
    tol = get_policy().manifold_tol if tol is None else tol
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    return manifold_of(x).contains(x.coords, tol)


# ============================================================================
# Diffeomorphism
# ============================================================================

def psi(x: PseudoPoint) -> ProductPoint:
    """Map a point to its (sphere, Euclidean) decomposition."""
    sphere, euclid = manifold_of(x).psi(x.coords)
    return ProductPoint(sphere, euclid)


def psi_inv(p: ProductPoint, beta: CurvatureLike) -> PseudoPoint:
    """Recombine a product point into a point on the pseudo-hyperboloid."""
    curvature = as_curvature(beta)
    signature = p.signature
    coords = PseudoHyperboloid(signature, curvature).psi_inv(p.sphere, p.euclid)
    return PseudoPoint(coords, signature, curvature)


def sph_log(base: VectorLike, p: VectorLike, radius: float) -> torch.Tensor:
    """Sphere log map at base (both on the sphere of the given radius)."""
    return sphere_log(as_tensor(base), as_tensor(p), float(radius))


def sph_exp(base: VectorLike, v: VectorLike, radius: float) -> torch.Tensor:
    """Sphere exp map at base; v must be tangent (orthogonal to base)."""
    return sphere_exp(as_tensor(base), as_tensor(v), float(radius))


# ============================================================================
# Log / Exp at the Origin
# ============================================================================

def diffeo_log_o(y: PseudoPoint) -> TangentVector:
    """Tangent coordinates of y at the origin (sphere log || Euclidean part)."""
    return TangentVector(manifold_of(y).log_o(y.coords), y.signature, y.curvature)


def diffeo_exp_o(xi: TangentVector) -> PseudoPoint:
    """Point on the manifold for tangent coordinates xi at the origin."""
    return PseudoPoint(manifold_of(xi).exp_o(xi.coords), xi.signature, xi.curvature)


def project_to_q(x: VectorLike, sig: Signature, beta: CurvatureLike) -> PseudoPoint:
    """Rescale the time block of x so the result lies exactly on the manifold."""
    curvature = as_curvature(beta)
    coords = PseudoHyperboloid(sig, curvature).project(_coords(x))
    return PseudoPoint(coords, sig, curvature)


def ps_norm(v: TangentVector) -> torch.Tensor:
    """sqrt|<v,v>| under the (positive definite) product tangent metric."""
    return torch.sqrt((v.coords * v.coords).sum(dim=-1))


def tangent_inner(a: TangentVector, b: TangentVector) -> torch.Tensor:
    """Tangent-metric inner product used for routing agreement."""
    return a.inner(b)


def origin(sig: Signature, beta: CurvatureLike, batch_shape: Sequence[int] = ()) -> PseudoPoint:
    """The pole (sqrt|beta|, 0, ..., 0 || 0)."""
    curvature = as_curvature(beta)
    return PseudoPoint(PseudoHyperboloid(sig, curvature).origin(batch_shape), sig, curvature)


def cosine(a: torch.Tensor, b: torch.Tensor, eps: Optional[float] = None) -> torch.Tensor:
    """
    Cosine of the angle between vectors over the last axis.

    Defined as 0 when either vector is zero.
    """
    eps = get_policy().norm_eps if eps is None else eps
    denom = safe_norm(a, eps, keepdim=False) * safe_norm(b, eps, keepdim=False)
    return ((a * b).sum(dim=-1) / denom).clamp(-1.0, 1.0)
