"""
Graph encoder and primary capsules.

GNNEncoder is one graph convolution: neighbour aggregation with the
symmetric normalized adjacency (self-loops included), a learnable linear
map and tanh. PrimaryCapsules turns each node embedding into a set of
capsules, either on the pseudo-hyperboloid (lift_to_manifold) or, for the
Euclidean baseline, as squashed vectors.
"""

import logging
import math
from typing import Optional

import torch
import torch.nn.functional as F
from torch import nn

from src.geometry.manifold import PseudoHyperboloid
from src.geometry.policy import get_policy
from src.routing.euclidean import squash
from src.utils.errors import DatasetError, DimensionMismatchError

logger = logging.getLogger(__name__)


def glorot(fan_in: int, fan_out: int, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Uniform Glorot initialization, (fan_in, fan_out)."""
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    weight = torch.rand(fan_in, fan_out, generator=generator, dtype=get_policy().dtype)
    return (2.0 * weight - 1.0) * bound


# ============================================================================
# Encoder
# ============================================================================

def gnn_encode(
    features: torch.Tensor,
    adjacency: torch.Tensor,
    weight: torch.Tensor,
    bias: torch.Tensor,
) -> torch.Tensor:
    """
    tanh(A_hat X W + b).

    Args:
        features: (N, F) node features
        adjacency: (N, N) sparse normalized adjacency with self-loops
        weight: (F, H)
        bias: (H,)

    Raises:
        DatasetError: empty graph or non-finite features
    """
    if features.shape[0] == 0:
        raise DatasetError("cannot encode an empty graph")
    if not bool(torch.isfinite(features).all()):
        raise DatasetError("node features contain NaN or Inf")
    if features.shape[-1] != weight.shape[0]:
        raise DimensionMismatchError(
            f"encoder expects {weight.shape[0]} input features, got {features.shape[-1]}"
        )
    aggregated = torch.sparse.mm(adjacency, features) if adjacency.is_sparse else adjacency @ features
    return torch.tanh(aggregated @ weight + bias)


class GNNEncoder(nn.Module):
    """
    Single graph-convolution encoder producing `out_dim`-wide node embeddings.

    Args:
        in_features: Input feature width F
        out_dim: Embedding width
        generator: Seeded generator for the weights
    """

    def __init__(self, in_features: int, out_dim: int = 64, generator: Optional[torch.Generator] = None):
        super().__init__()
        self.weight = nn.Parameter(glorot(in_features, out_dim, generator))
        self.bias = nn.Parameter(torch.zeros(out_dim, dtype=get_policy().dtype))

    @property
    def in_features(self) -> int:
        return self.weight.shape[0]

    def forward(self, features: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
        return gnn_encode(features, adjacency, self.weight, self.bias)


# ============================================================================
# Primary Capsules
# ============================================================================

def lift_to_manifold(
    embedding: torch.Tensor,
    weight: torch.Tensor,
    bias: torch.Tensor,
    manifold: PseudoHyperboloid,
    count: int = 1,
    dropout: float = 0.0,
    training: bool = False,
) -> torch.Tensor:
    """
    Map embeddings to `count` capsules each on the manifold.

    A linear map gives the s + t free tangent coordinates of each capsule
    at the origin; the pole coordinate is zero. Dropout acts on the
    tangent vector, then exp at the origin lands on the manifold.

    Args:
        embedding: (..., H)
        weight: (H, count * (D - 1))
        bias: (count * (D - 1),)
        manifold: Target pseudo-hyperboloid with ambient dim D

    Returns:
        (..., count, D) manifold coordinates
    """
    free = manifold.dim - 1
    if weight.shape[-1] != count * free:
        raise DimensionMismatchError(
            f"lift weight produces {weight.shape[-1]} values, {count} capsules of dim {manifold.dim} need {count * free}"
        )
    reduced = (embedding @ weight + bias).reshape(*embedding.shape[:-1], count, free)
    reduced = F.dropout(reduced, p=dropout, training=training)
    tangent = torch.cat([torch.zeros_like(reduced[..., :1]), reduced], dim=-1)
    return manifold.exp_o(tangent)


class PrimaryCapsules(nn.Module):
    """
    Per-node primary capsules from encoder embeddings.

    With a manifold the capsules are lifted onto it; without one they are
    squashed Euclidean vectors of dimension `capsule_dim`.

    Args:
        embed_dim: Encoder width
        count: Capsules per node
        capsule_dim: Coordinates per capsule
        manifold: Target manifold, or None for Euclidean capsules
        dropout: Rate applied to tangent (or pre-squash) vectors
        generator: Seeded generator for the weights
    """

    def __init__(
        self,
        embed_dim: int,
        count: int,
        capsule_dim: int,
        manifold: Optional[PseudoHyperboloid] = None,
        dropout: float = 0.0,
        generator: Optional[torch.Generator] = None,
    ):
        super().__init__()
        if manifold is not None and manifold.dim != capsule_dim:
            raise DimensionMismatchError(f"capsule_dim {capsule_dim} != manifold dim {manifold.dim}")
        self.manifold = manifold
        self.count = count
        self.capsule_dim = capsule_dim
        self.dropout = dropout
        width = count * (capsule_dim - 1 if manifold is not None else capsule_dim)
        self.weight = nn.Parameter(glorot(embed_dim, width, generator))
        self.bias = nn.Parameter(torch.zeros(width, dtype=get_policy().dtype))

    def forward(self, embedding: torch.Tensor) -> torch.Tensor:
        if self.manifold is not None:
            return lift_to_manifold(
                embedding, self.weight, self.bias, self.manifold,
                count=self.count, dropout=self.dropout, training=self.training,
            )
        vectors = (embedding @ self.weight + self.bias).reshape(*embedding.shape[:-1], self.count, self.capsule_dim)
        return squash(F.dropout(vectors, p=self.dropout, training=self.training))
