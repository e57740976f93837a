"""
Classification heads, graph readout and the training loss.

The pseudo-Riemannian capsule classifier (PRCC) maps each class capsule
to the tangent space at the origin and scores it by its cosine alignment
with a learnable class prototype. The scores are scaled by sqrt|beta_L|,
a learnable classifier curvature, before the softmax:

    logit_c = sqrt|beta_L| * cos(z_c, prototype_c),  z_c = log_o(v_c)

Educational Note:
Because sqrt|beta_L| multiplies every logit by the same positive number it
acts as a softmax temperature: it sharpens or flattens the distribution
but never changes which class wins.
"""

import logging
from typing import Iterable, Optional

import torch
import torch.nn.functional as F
from torch import nn

from src.geometry.manifold import PseudoHyperboloid
from src.geometry.ops import cosine
from src.geometry.policy import get_policy
from src.utils.errors import DimensionMismatchError, LabelRangeError

logger = logging.getLogger(__name__)


# ============================================================================
# PRCC
# ============================================================================

def prcc_logits(class_tangents: torch.Tensor, prototypes: torch.Tensor, log_abs_beta: torch.Tensor) -> torch.Tensor:
    """
    Curvature-weighted alignment logits.

    Args:
        class_tangents: (..., C, D) tangent vectors of the class capsules
        prototypes: (C, D) class prototypes
        log_abs_beta: scalar log|beta_L|

    Returns:
        (..., C) logits; a zero tangent aligns as 0
    """
    if class_tangents.shape[-2:] != prototypes.shape:
        raise DimensionMismatchError(
            f"class capsules {tuple(class_tangents.shape[-2:])} do not match prototypes {tuple(prototypes.shape)}"
        )
    return torch.exp(0.5 * log_abs_beta) * cosine(class_tangents, prototypes)


def classify_prcc(
    class_capsules: torch.Tensor,
    prototypes: torch.Tensor,
    beta_l: float,
    manifold: PseudoHyperboloid,
) -> torch.Tensor:
    """
    Class probabilities from class capsules on the final manifold.

    Args:
        class_capsules: (..., C, D) manifold coordinates
        prototypes: (C, D) tangent prototypes
        beta_l: Classifier curvature (negative)
        manifold: Final-layer manifold

    Returns:
        (..., C) probabilities
    """
    if beta_l >= 0:
        raise ValueError(f"beta_L must be negative, got {beta_l}")
    log_abs_beta = torch.log(torch.as_tensor(-beta_l, dtype=class_capsules.dtype))
    logits = prcc_logits(manifold.log_o(class_capsules), prototypes, log_abs_beta)
    return torch.softmax(logits, dim=-1)


def random_unit_tangents(count: int, dim: int, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Unit tangent vectors at the origin (pole coordinate zero), (count, dim)."""
    reduced = torch.randn(count, dim - 1, generator=generator, dtype=get_policy().dtype)
    reduced = reduced / reduced.norm(dim=-1, keepdim=True)
    return torch.cat([torch.zeros(count, 1, dtype=reduced.dtype), reduced], dim=-1)


class PRCCHead(nn.Module):
    """
    PRCC over class tangent vectors.

    Args:
        num_classes: C
        capsule_dim: D
        beta: Initial classifier curvature (stored as log|beta|)
        learn_curvature: Train log|beta_L|
        generator: Seeded generator for the prototypes
    """

    def __init__(
        self,
        num_classes: int,
        capsule_dim: int,
        beta: float = -1.0,
        learn_curvature: bool = True,
        generator: Optional[torch.Generator] = None,
    ):
        super().__init__()
        self.prototypes = nn.Parameter(random_unit_tangents(num_classes, capsule_dim, generator))
        log_abs_beta = torch.log(torch.tensor(-beta, dtype=get_policy().dtype))
        if learn_curvature:
            self.log_abs_beta = nn.Parameter(log_abs_beta)
        else:
            self.register_buffer("log_abs_beta", log_abs_beta)

    @property
    def beta(self) -> float:
        return -float(torch.exp(self.log_abs_beta.detach()))

    def forward(self, class_tangents: torch.Tensor) -> torch.Tensor:
        return prcc_logits(class_tangents, self.prototypes, self.log_abs_beta)


class LinearHead(nn.Module):
    """Softmax regression on flattened class-capsule tangents (or node embeddings)."""

    def __init__(self, in_dim: int, num_classes: int, generator: Optional[torch.Generator] = None):
        super().__init__()
        dtype = get_policy().dtype
        bound = 1.0 / in_dim ** 0.5
        self.weight = nn.Parameter((2.0 * torch.rand(num_classes, in_dim, generator=generator, dtype=dtype) - 1.0) * bound)
        self.bias = nn.Parameter(torch.zeros(num_classes, dtype=dtype))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.linear(x.flatten(start_dim=-2) if x.dim() > 2 else x, self.weight, self.bias)


# ============================================================================
# Graph Readout
# ============================================================================

def tangent_mean(tangents: torch.Tensor, graph_index: torch.Tensor, num_graphs: int) -> torch.Tensor:
    """Per-graph mean of (N, ...) tangent vectors, summed in node order."""
    shape = (num_graphs,) + tuple(tangents.shape[1:])
    total = tangents.new_zeros(shape).index_add(0, graph_index, tangents)
    counts = torch.bincount(graph_index, minlength=num_graphs).to(tangents.dtype)
    if bool((counts == 0).any()):
        raise ValueError("graph readout needs at least one node per graph")
    return total / counts.reshape(-1, *([1] * (tangents.dim() - 1)))


def graph_readout(
    node_capsules: torch.Tensor,
    graph_index: torch.Tensor,
    num_graphs: int,
    manifold: Optional[PseudoHyperboloid] = None,
) -> torch.Tensor:
    """
    Pool node capsules into graph capsules.

    On a manifold this is exp_o of the mean of log_o over each graph's
    nodes; Euclidean capsules are averaged directly.

    Args:
        node_capsules: (N, P, D)
        graph_index: (N,) graph id per node
        num_graphs: G

    Returns:
        (G, P, D)
    """
    if manifold is None:
        return tangent_mean(node_capsules, graph_index, num_graphs)
    return manifold.exp_o(tangent_mean(manifold.log_o(node_capsules), graph_index, num_graphs))


# ============================================================================
# Loss
# ============================================================================

def _check_labels(labels: torch.Tensor, num_classes: int) -> None:
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= num_classes):
        bad = labels[(labels < 0) | (labels >= num_classes)][0]
        raise LabelRangeError(f"label {int(bad)} out of range [0, {num_classes})")


def l2_penalty(parameters: Optional[Iterable[torch.Tensor]]) -> torch.Tensor:
    """Sum of squared entries over the given parameters."""
    terms = [(p * p).sum() for p in (parameters or [])]
    return torch.stack(terms).sum() if terms else torch.zeros((), dtype=get_policy().dtype)


def loss(
    probabilities: torch.Tensor,
    labels: torch.Tensor,
    parameters: Optional[Iterable[torch.Tensor]] = None,
    weight_decay: float = 0.0,
) -> torch.Tensor:
    """
    Mean negative log-likelihood of the labels plus weight_decay * sum ||W||^2.

    Args:
        probabilities: (N, C) rows on the simplex
        labels: (N,) int64

    Raises:
        LabelRangeError: a label outside [0, C)
    """
    labels = torch.as_tensor(labels, dtype=torch.int64)
    _check_labels(labels, probabilities.shape[-1])
    tiny = torch.finfo(probabilities.dtype).tiny
    nll = -torch.log(probabilities.gather(-1, labels.unsqueeze(-1)).clamp_min(tiny)).mean()
    return nll + weight_decay * l2_penalty(parameters) if weight_decay else nll


def cross_entropy_loss(
    logits: torch.Tensor,
    labels: torch.Tensor,
    parameters: Optional[Iterable[torch.Tensor]] = None,
    weight_decay: float = 0.0,
) -> torch.Tensor:
    """loss() computed from logits through log-softmax."""
    labels = torch.as_tensor(labels, dtype=torch.int64)
    _check_labels(labels, logits.shape[-1])
    nll = F.cross_entropy(logits, labels)
    return nll + weight_decay * l2_penalty(parameters) if weight_decay else nll
