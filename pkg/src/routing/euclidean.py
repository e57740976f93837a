"""
Euclidean dynamic routing by agreement.

The baseline capsule routing: every child predicts every parent through
a learned matrix, coupling coefficients are a softmax over parents, each
parent is the squashed coupling-weighted sum of its predictions, and
logits grow with the dot product between prediction and parent.
"""

import logging
from typing import Optional, Tuple, Union

import torch
from torch import nn

from src.geometry.manifold import safe_norm
from src.geometry.policy import get_policy
from src.utils.errors import DimensionMismatchError
from .config import RoutingConfig, RoutingMode, RoutingState, RoutingTrace

logger = logging.getLogger(__name__)


def squash(s: torch.Tensor, eps: Optional[float] = None) -> torch.Tensor:
    """
    Squash a vector: ||s||^2 / (1 + ||s||^2) * s / ||s||.

    Zero input gives zero output.
    """
    eps = get_policy().norm_eps if eps is None else eps
    sq = (s * s).sum(dim=-1, keepdim=True)
    return sq / (1.0 + sq) * s / safe_norm(s, eps)


def predict_votes(children: torch.Tensor, W: torch.Tensor) -> torch.Tensor:
    """
    Prediction vectors u_hat[n, i, j] = W[i, j] @ u[n, i].

    Args:
        children: (B, N_c, D_in)
        W: (P, N_p, D_out, D_in) with P = 1 (shared) or P = N_c

    Returns:
        (B, N_c, N_p, D_out)
    """
    if W.dim() != 4:
        raise DimensionMismatchError(f"routing weights must be 4-D (P, N_p, D_out, D_in), got {tuple(W.shape)}")
    if W.shape[-1] != children.shape[-1]:
        raise DimensionMismatchError(
            f"weights expect {W.shape[-1]}-dim children, got {children.shape[-1]}"
        )
    if W.shape[0] == 1:
        return torch.einsum('jab,nib->nija', W[0], children)
    if W.shape[0] != children.shape[-2]:
        raise DimensionMismatchError(
            f"per-pair weights cover {W.shape[0]} children, got {children.shape[-2]}"
        )
    return torch.einsum('ijab,nib->nija', W, children)


def euclid_route(
    children: torch.Tensor,
    W: torch.Tensor,
    cfg: RoutingConfig,
    trace: bool = False,
) -> Union[torch.Tensor, Tuple[torch.Tensor, RoutingTrace]]:
    """
    Route child vectors to parent vectors.

    Args:
        children: (N_c, D_in) or (B, N_c, D_in)
        W: (P, N_p, D_out, D_in) transformation matrices
        cfg: Routing configuration (mode must be EUCLIDEAN)
        trace: Also return per-iteration RoutingState snapshots

    Returns:
        Parent vectors (N_p, D_out) or (B, N_p, D_out)
    """
    if cfg.mode != RoutingMode.EUCLIDEAN:
        raise ValueError(f"euclid_route needs mode=euclidean, got {cfg.mode.value}")
    unbatched = children.dim() == 2
    if unbatched:
        children = children.unsqueeze(0)
    if cfg.child_count is not None and children.shape[-2] != cfg.child_count:
        raise DimensionMismatchError(
            f"layer expects {cfg.child_count} children, got {children.shape[-2]}"
        )

    u_hat = predict_votes(children, W)
    batch, n_children, n_parents, _ = u_hat.shape
    b = u_hat.new_zeros(batch, n_children, n_parents)
    v = u_hat.new_zeros(batch, n_parents, u_hat.shape[-1])
    states: RoutingTrace = []

    for iteration in range(cfg.iterations):
        c = torch.softmax(b, dim=-1)
        s = torch.einsum('nij,nija->nja', c, u_hat)
        v_prev, v = v, squash(s)
        b = b + torch.einsum('nija,nja->nij', u_hat, v)
        if trace:
            states.append(RoutingState(
                iteration=iteration, b=b, c=c,
                gamma=torch.ones_like(c).unsqueeze(-1),
                parents=v, prev_parents=v_prev,
            ))

    if unbatched:
        v = v.squeeze(0)
    return (v, states) if trace else v


class EuclideanCapsuleLayer(nn.Module):
    """
    Capsule layer with Euclidean routing by agreement.

    Args:
        child_count: N_c
        parent_count: N_p
        in_dim: Child capsule dimension
        out_dim: Parent capsule dimension
        config: Routing configuration (mode forced to EUCLIDEAN)
        generator: Seeded generator for weight init
        init_std: Standard deviation of the weight noise
    """

    def __init__(
        self,
        child_count: int,
        parent_count: int,
        in_dim: int,
        out_dim: int,
        config: RoutingConfig,
        generator: Optional[torch.Generator] = None,
        init_std: float = 0.1,
    ):
        super().__init__()
        self.config = config.model_copy(update={"mode": RoutingMode.EUCLIDEAN}).for_layer(child_count, parent_count)
        dtype = get_policy().dtype
        shared = 1 if self.config.share_weights else child_count
        eye = torch.eye(out_dim, in_dim, dtype=dtype)
        noise = torch.randn(shared, parent_count, out_dim, in_dim, generator=generator, dtype=dtype)
        self.W = nn.Parameter(eye + init_std * noise)

    def forward(self, children: torch.Tensor, trace: bool = False):
        return euclid_route(children, self.W, self.config, trace=trace)
