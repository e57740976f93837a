"""
Domain types for the pseudo-hyperboloid geometry.

Points and tangent vectors wrap batched float64 tensors: the last axis
holds the coordinates, every leading axis is a batch axis. A point stores
its coordinates as (time || space), with the time block of length t+1
carrying the minus sign of the ambient metric.

Educational Note:
Keeping the signature and curvature next to the coordinates means a
function receiving a PseudoPoint never has to guess which manifold the
numbers belong to, and dimension mistakes surface at construction.
"""

import math
from dataclasses import dataclass
from typing import Tuple, Union

import torch

from src.utils.errors import DimensionMismatchError, GeometryError
from .policy import get_policy


# ============================================================================
# Signature and Curvature
# ============================================================================

@dataclass(frozen=True)
class Signature:
    """
    Metric signature of the ambient pseudo-Euclidean space.

    Attributes:
        s: Number of space-like (plus sign) coordinates
        t: Sphere dimension; the time-like block has t+1 coordinates
    """
    s: int
    t: int

    def __post_init__(self):
        for name in ("s", "t"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise GeometryError(f"Signature.{name} must be an integer, got {value!r}")
            if value < 1:
                raise GeometryError(f"Signature.{name} must be >= 1, got {value}")

    @property
    def time_dim(self) -> int:
        return self.t + 1

    @property
    def ambient_dim(self) -> int:
        return self.s + self.t + 1

    def check(self, coords: torch.Tensor, what: str = "vector") -> None:
        """Raise DimensionMismatchError unless the last axis has ambient_dim entries."""
        if coords.dim() == 0 or coords.shape[-1] != self.ambient_dim:
            raise DimensionMismatchError(
                f"{what} has {coords.shape[-1] if coords.dim() else 0} coordinates, "
                f"signature (s={self.s}, t={self.t}) needs {self.ambient_dim}"
            )

    def split(self, coords: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Split coordinates into (time, space) blocks."""
        self.check(coords)
        return coords[..., :self.time_dim], coords[..., self.time_dim:]

    def to_dict(self) -> dict:
        return {"s": self.s, "t": self.t}


@dataclass(frozen=True)
class Curvature:
    """Curvature of the base manifold; must be negative."""
    beta: float

    def __post_init__(self):
        beta = float(self.beta)
        if not math.isfinite(beta) or beta == 0.0:
            raise GeometryError(f"Curvature must be finite and nonzero, got {self.beta!r}")
        if beta > 0.0:
            raise GeometryError(f"Base manifold requires beta < 0, got {beta}")
        object.__setattr__(self, "beta", beta)

    @property
    def radius(self) -> float:
        """Radius sqrt|beta| of the sphere factor."""
        return math.sqrt(-self.beta)

    def __float__(self) -> float:
        return self.beta


CurvatureLike = Union[Curvature, float, int]


def as_curvature(beta: CurvatureLike) -> Curvature:
    return beta if isinstance(beta, Curvature) else Curvature(float(beta))


def as_tensor(values, dtype=None) -> torch.Tensor:
    """Convert to a tensor of the policy dtype (no copy when already matching)."""
    dtype = dtype or get_policy().dtype
    if isinstance(values, torch.Tensor):
        return values.to(dtype)
    return torch.as_tensor(values, dtype=dtype)


# ============================================================================
# Points and Tangent Vectors
# ============================================================================

@dataclass(frozen=True)
class PseudoPoint:
    """Point(s) on the pseudo-hyperboloid <x,x> = beta."""
    coords: torch.Tensor
    signature: Signature
    curvature: Curvature

    def __post_init__(self):
        object.__setattr__(self, "coords", as_tensor(self.coords))
        object.__setattr__(self, "curvature", as_curvature(self.curvature))
        self.signature.check(self.coords, "PseudoPoint")

    @classmethod
    def from_blocks(cls, time, space, beta: CurvatureLike = -1.0) -> "PseudoPoint":
        time, space = as_tensor(time), as_tensor(space)
        signature = Signature(s=space.shape[-1], t=time.shape[-1] - 1)
        return cls(torch.cat([time, space], dim=-1), signature, as_curvature(beta))

    @property
    def time(self) -> torch.Tensor:
        return self.coords[..., :self.signature.time_dim]

    @property
    def space(self) -> torch.Tensor:
        return self.coords[..., self.signature.time_dim:]

    @property
    def beta(self) -> float:
        return self.curvature.beta

    @property
    def batch_shape(self) -> torch.Size:
        return self.coords.shape[:-1]

    def with_coords(self, coords: torch.Tensor) -> "PseudoPoint":
        return PseudoPoint(coords, self.signature, self.curvature)


@dataclass(frozen=True)
class ProductPoint:
    """Image of a point under psi: a sphere component and a Euclidean component."""
    sphere: torch.Tensor
    euclid: torch.Tensor

    def __post_init__(self):
        object.__setattr__(self, "sphere", as_tensor(self.sphere))
        object.__setattr__(self, "euclid", as_tensor(self.euclid))
        if self.sphere.shape[-1] < 2 or self.euclid.shape[-1] < 1:
            raise DimensionMismatchError(
                f"ProductPoint needs t+1 >= 2 sphere and s >= 1 Euclidean coordinates, "
                f"got {self.sphere.shape[-1]} and {self.euclid.shape[-1]}"
            )

    @property
    def signature(self) -> Signature:
        return Signature(s=self.euclid.shape[-1], t=self.sphere.shape[-1] - 1)


@dataclass(frozen=True)
class TangentVector:
    """
    Tangent vector(s) at the origin in product-space coordinates.

    Layout is (sphere-tangent block of length t+1 || Euclidean block of
    length s). At the pole (sqrt|beta|, 0, ..., 0) the sphere-tangent block
    has a zero first coordinate.
    """
    coords: torch.Tensor
    signature: Signature
    curvature: Curvature

    def __post_init__(self):
        object.__setattr__(self, "coords", as_tensor(self.coords))
        object.__setattr__(self, "curvature", as_curvature(self.curvature))
        self.signature.check(self.coords, "TangentVector")

    @classmethod
    def from_reduced(cls, reduced, signature: Signature, beta: CurvatureLike = -1.0) -> "TangentVector":
        """Build from the s+t free coordinates by inserting the zero pole coordinate."""
        reduced = as_tensor(reduced)
        if reduced.shape[-1] != signature.ambient_dim - 1:
            raise DimensionMismatchError(
                f"reduced tangent has {reduced.shape[-1]} coordinates, expected {signature.ambient_dim - 1}"
            )
        zero = torch.zeros_like(reduced[..., :1])
        return cls(torch.cat([zero, reduced], dim=-1), signature, as_curvature(beta))

    @property
    def sphere_block(self) -> torch.Tensor:
        return self.coords[..., :self.signature.time_dim]

    @property
    def euclid_block(self) -> torch.Tensor:
        return self.coords[..., self.signature.time_dim:]

    def _same_space(self, other: "TangentVector") -> None:
        if other.signature != self.signature or other.curvature != self.curvature:
            raise DimensionMismatchError("tangent vectors live in different tangent spaces")

    def __add__(self, other: "TangentVector") -> "TangentVector":
        self._same_space(other)
        return TangentVector(self.coords + other.coords, self.signature, self.curvature)

    def __sub__(self, other: "TangentVector") -> "TangentVector":
        self._same_space(other)
        return TangentVector(self.coords - other.coords, self.signature, self.curvature)

    def __mul__(self, scalar) -> "TangentVector":
        if isinstance(scalar, torch.Tensor) and scalar.dim() > 0:
            scalar = scalar.unsqueeze(-1)
        return TangentVector(self.coords * scalar, self.signature, self.curvature)

    __rmul__ = __mul__

    def __neg__(self) -> "TangentVector":
        return TangentVector(-self.coords, self.signature, self.curvature)

    def inner(self, other: "TangentVector") -> torch.Tensor:
        """Product-space tangent inner product (positive definite)."""
        self._same_space(other)
        return (self.coords * other.coords).sum(dim=-1)
