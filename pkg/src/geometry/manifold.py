"""
Tensor-level pseudo-hyperboloid operations.

PseudoHyperboloid works on raw coordinate tensors of shape (..., s+t+1)
so routing layers can run the geometry over (batch, child, parent,
perspective) grids without wrapping every intermediate in a dataclass.
The typed functions in ops.py delegate here.

Note:
Every norm that ends up in a denominator is floored at norm_eps through
its squared value (sqrt(max(|x|^2, eps^2))), and the sphere angle uses
atan2. Both keep first derivatives finite at the pole and at zero
tangent vectors.
"""

from typing import Optional, Sequence, Tuple

import torch

from src.utils.errors import CutLocusError, ManifoldMembershipError, PsiUndefinedError
from .policy import NumericPolicy, get_policy
from .types import CurvatureLike, Signature, as_curvature


def safe_norm(x: torch.Tensor, eps: float, keepdim: bool = True) -> torch.Tensor:
    """Euclidean norm over the last axis, floored at eps."""
    return torch.sqrt(torch.clamp_min((x * x).sum(dim=-1, keepdim=keepdim), eps * eps))


# ============================================================================
# Sphere Maps
# ============================================================================

def sphere_log(
    base: torch.Tensor,
    p: torch.Tensor,
    radius: float,
    policy: Optional[NumericPolicy] = None,
    check: bool = True,
) -> torch.Tensor:
    """
    Log map on the sphere of the given radius.

    Returns the tangent vector at base, orthogonal to base, whose norm is
    the geodesic distance radius * theta.

    Raises:
        CutLocusError: if p is (numerically) antipodal to base
    """
    policy = policy or get_policy()
    r2 = radius * radius
    cos_theta = (base * p).sum(dim=-1, keepdim=True) / r2
    if check and bool((cos_theta < -1.0 + policy.cut_locus_eps).any()):
        raise CutLocusError("log undefined at cut locus: point is antipodal to the base")

    p_perp = p - cos_theta * base
    perp_norm = safe_norm(p_perp, policy.norm_eps)
    theta = torch.atan2(perp_norm / radius, cos_theta)
    return (theta * radius / perp_norm) * p_perp


def sphere_exp(
    base: torch.Tensor,
    v: torch.Tensor,
    radius: float,
    policy: Optional[NumericPolicy] = None,
) -> torch.Tensor:
    """
    Exp map on the sphere of the given radius.

    The result is renormalized onto the sphere; v = 0 returns base.
    """
    policy = policy or get_policy()
    v_norm = safe_norm(v, policy.norm_eps)
    angle = v_norm / radius
    out = torch.cos(angle) * base + torch.sin(angle) * radius * v / v_norm
    return out * (radius / safe_norm(out, policy.norm_eps))


# ============================================================================
# Pseudo-Hyperboloid
# ============================================================================

class PseudoHyperboloid:
    """
    The level set <x,x> = beta in R^{s, t+1} with beta < 0.

    Metric: minus on the t+1 time coordinates, plus on the s space
    coordinates. The origin is (sqrt|beta|, 0, ..., 0 || 0).

    Args:
        signature: (s, t) of the ambient space
        beta: Negative curvature
        policy: Numeric policy (defaults to the global one at call time)
    """

    def __init__(
        self,
        signature: Signature,
        beta: CurvatureLike = -1.0,
        policy: Optional[NumericPolicy] = None,
    ):
        self.signature = signature
        self.curvature = as_curvature(beta)
        self._policy = policy

    def __repr__(self) -> str:
        return f"PseudoHyperboloid(s={self.signature.s}, t={self.signature.t}, beta={self.beta})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PseudoHyperboloid)
            and self.signature == other.signature
            and self.curvature == other.curvature
        )

    def __hash__(self) -> int:
        return hash((self.signature, self.curvature))

    @property
    def policy(self) -> NumericPolicy:
        return self._policy or get_policy()

    @property
    def beta(self) -> float:
        return self.curvature.beta

    @property
    def radius(self) -> float:
        return self.curvature.radius

    @property
    def dim(self) -> int:
        return self.signature.ambient_dim

    @property
    def time_dim(self) -> int:
        return self.signature.time_dim

    def split(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        return self.signature.split(x)

    # ------------------------------------------------------------------------
    # Inner product and membership
    # ------------------------------------------------------------------------

    def inner(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        """Pseudo-Euclidean inner product over the last axis."""
        self.signature.check(x, "x")
        self.signature.check(y, "y")
        td = self.time_dim
        time = (x[..., :td] * y[..., :td]).sum(dim=-1)
        space = (x[..., td:] * y[..., td:]).sum(dim=-1)
        return space - time

    def membership_error(self, x: torch.Tensor) -> torch.Tensor:
        """|<x,x> - beta| / max(1, |beta|) per point."""
        return (self.inner(x, x) - self.beta).abs() / max(1.0, abs(self.beta))

    def contains(self, x: torch.Tensor, tol: Optional[float] = None) -> torch.Tensor:
        """Boolean membership per point at the given (relative) tolerance."""
        tol = self.policy.manifold_tol if tol is None else tol
        return self.membership_error(x) <= tol

    def check_membership(self, x: torch.Tensor, what: str = "point") -> None:
        """Raise ManifoldMembershipError if any point is off the manifold."""
        err = self.membership_error(x.detach())
        worst = float(err.max()) if err.numel() else 0.0
        if not worst <= self.policy.manifold_tol:
            raise ManifoldMembershipError(
                f"{what} off {self!r}: relative membership error {worst:.3e} "
                f"exceeds {self.policy.manifold_tol:.1e}"
            )

    # ------------------------------------------------------------------------
    # Origin
    # ------------------------------------------------------------------------

    def pole(self, dtype: Optional[torch.dtype] = None, device=None) -> torch.Tensor:
        """Sphere component of the origin: (sqrt|beta|, 0, ..., 0)."""
        pole = torch.zeros(self.time_dim, dtype=dtype or self.policy.dtype, device=device)
        pole[0] = self.radius
        return pole

    def origin(self, batch_shape: Sequence[int] = (), dtype: Optional[torch.dtype] = None, device=None) -> torch.Tensor:
        o = torch.zeros(*batch_shape, self.dim, dtype=dtype or self.policy.dtype, device=device)
        o[..., 0] = self.radius
        return o

    # ------------------------------------------------------------------------
    # Diffeomorphism to sphere x Euclidean
    # ------------------------------------------------------------------------

    def psi(self, x: torch.Tensor, check: bool = True) -> Tuple[torch.Tensor, torch.Tensor]:
        """Split x into (sphere of radius sqrt|beta|, Euclidean) components."""
        time, space = self.split(x)
        time_sq = (time * time).sum(dim=-1, keepdim=True)
        guard = self.policy.time_guard
        if check and bool((time_sq <= guard * guard).any()):
            raise PsiUndefinedError("psi undefined: time block has zero norm")
        time_norm = torch.sqrt(torch.clamp_min(time_sq, guard * guard))
        return self.radius * time / time_norm, space

    def psi_inv(self, sphere: torch.Tensor, euclid: torch.Tensor, check: bool = True) -> torch.Tensor:
        """Recombine sphere and Euclidean components into a point on the manifold."""
        if check:
            sphere_norm = (sphere.detach() * sphere.detach()).sum(dim=-1).sqrt()
            off = (sphere_norm - self.radius).abs()
            if off.numel() and float(off.max()) > self.policy.sphere_tol * max(1.0, self.radius):
                raise ManifoldMembershipError(
                    f"sphere component norm deviates from {self.radius:.6g} by {float(off.max()):.3e}"
                )
        scale = torch.sqrt(-self.beta + (euclid * euclid).sum(dim=-1, keepdim=True)) / self.radius
        return torch.cat([scale * sphere, euclid], dim=-1)

    # ------------------------------------------------------------------------
    # Log / exp at the origin
    # ------------------------------------------------------------------------

    def log_o(self, x: torch.Tensor, check: bool = True) -> torch.Tensor:
        """Tangent coordinates at the origin of point(s) x."""
        sphere, euclid = self.psi(x, check=check)
        pole = self.pole(dtype=x.dtype, device=x.device)
        tangent = sphere_log(pole, sphere, self.radius, self.policy, check=check)
        # Tangent space at the pole is orthogonal to the first axis
        tangent = torch.cat([torch.zeros_like(tangent[..., :1]), tangent[..., 1:]], dim=-1)
        return torch.cat([tangent, euclid], dim=-1)

    def exp_o(self, v: torch.Tensor) -> torch.Tensor:
        """Point(s) on the manifold for tangent coordinates v at the origin."""
        self.signature.check(v, "tangent vector")
        td = self.time_dim
        pole = self.pole(dtype=v.dtype, device=v.device)
        sphere = sphere_exp(pole, v[..., :td], self.radius, self.policy)
        return self.psi_inv(sphere, v[..., td:], check=False)

    def project(self, x: torch.Tensor) -> torch.Tensor:
        """Rescale the time block so that <x,x> = beta; space block unchanged."""
        time, space = self.split(x)
        time_sq = (time * time).sum(dim=-1, keepdim=True)
        guard = self.policy.time_guard
        if bool((time_sq <= guard * guard).any()):
            raise PsiUndefinedError("projection undefined: time block has zero norm")
        target = -self.beta + (space * space).sum(dim=-1, keepdim=True)
        return torch.cat([time * torch.sqrt(target / time_sq), space], dim=-1)
