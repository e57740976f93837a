"""
Pseudo-Riemannian capsule layers and the routing loop.

PerspectiveParams owns every trainable tensor of one capsule layer:
per-(child, parent, perspective) transformation matrices, perspective
curvatures and the gate parameters. prr_routing runs the routing
iterations over a batch of child capsules; PCR is the same loop with a
single perspective and every gate fixed to one.

Shapes used throughout (B batch, N_c children, N_p parents, K perspectives):
    children      (B, N_c, D_in)
    predictions   (B, N_c, N_p, K, D_out)
    b, c          (B, N_c, N_p)
    gamma         (B, N_c, N_p, K)
    parents       (B, N_p, D_out)
"""

import logging
import math
from typing import List, Optional, Tuple, Union

import torch
from torch import nn

from src.geometry.manifold import PseudoHyperboloid
from src.geometry.ops import cosine
from src.geometry.policy import get_policy
from src.geometry.types import CurvatureLike, PseudoPoint, Signature
from src.utils.errors import DimensionMismatchError, GeometryError, RoutingError
from .config import GateForm, GateTerm, RoutingConfig, RoutingMode, RoutingState, RoutingTrace
from .euclidean import euclid_route
from .pseudo_riemannian import (
    Activation,
    activate_tangent,
    alignment_term,
    consistency_term,
    curvature_compat,
    from_reduced_tangent,
    normalize_composite,
    reduced_tangent,
    simplified_gate,
)

logger = logging.getLogger(__name__)


def initial_perspective_curvatures(k: int) -> List[float]:
    """
    Symmetric spread of perspective curvatures in [-1, 1].

    Four perspectives give (-1, -0.5, 0.5, 1); odd counts include 0.
    """
    half = k // 2
    side = [(i + 1) / half for i in range(half)] if half else []
    values = [-v for v in reversed(side)] + ([0.0] if k % 2 else []) + side
    return values


def _apply_blockwise(W: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """(P, N_p, K, o, i) weights on (B, N_c, i) inputs -> (B, N_c, N_p, K, o)."""
    if W.shape[0] == 1:
        return torch.einsum('jkab,nib->nijka', W[0], x)
    return torch.einsum('ijkab,nib->nijka', W, x)


# ============================================================================
# Parameters
# ============================================================================

class PerspectiveParams(nn.Module):
    """
    Trainable parameters of one pseudo-Riemannian capsule layer.

    Args:
        in_signature: Signature of the child manifold
        out_signature: Signature of the parent manifold
        child_count: N_c
        parent_count: N_p
        config: Routing configuration (PCR or ACR)
        in_beta: Curvature of the child manifold
        out_beta: Curvature of the parent manifold
        generator: Seeded generator for initialization
        init_std: Noise added to the identity-initialized transformations
    """

    def __init__(
        self,
        in_signature: Signature,
        out_signature: Signature,
        child_count: int,
        parent_count: int,
        config: RoutingConfig,
        in_beta: CurvatureLike = -1.0,
        out_beta: CurvatureLike = -1.0,
        generator: Optional[torch.Generator] = None,
        init_std: float = 0.1,
    ):
        super().__init__()
        if config.mode == RoutingMode.EUCLIDEAN:
            raise ValueError("PerspectiveParams is for pcr/acr layers; use EuclideanCapsuleLayer")
        if config.mode == RoutingMode.ACR and in_signature != out_signature:
            raise DimensionMismatchError(
                f"adaptive curvature routing compares child and parent tangents and needs equal "
                f"signatures, got {in_signature} -> {out_signature}"
            )
        self.config = config.for_layer(child_count, parent_count)
        self.in_manifold = PseudoHyperboloid(in_signature, in_beta)
        self.out_manifold = PseudoHyperboloid(out_signature, out_beta)

        dtype = get_policy().dtype
        k = self.config.effective_perspectives
        shared = 1 if self.config.share_weights else child_count
        pair_shape = (shared, parent_count, k)

        def near_identity(rows: int, cols: int) -> torch.Tensor:
            eye = torch.eye(rows, cols, dtype=dtype)
            noise = torch.randn(*pair_shape, rows, cols, generator=generator, dtype=dtype)
            return eye + init_std * noise

        self.W_sph = nn.Parameter(near_identity(out_signature.t, in_signature.t))
        self.W_euc = nn.Parameter(near_identity(out_signature.s, in_signature.s))

        if self.config.mode != RoutingMode.ACR:
            return

        beta_k = torch.tensor(initial_perspective_curvatures(k), dtype=dtype)
        if self.config.learn_curvature:
            self.beta_k = nn.Parameter(beta_k)
        else:
            self.register_buffer("beta_k", beta_k)

        concat_dim = in_signature.ambient_dim + out_signature.ambient_dim

        def gaussian(*shape: int, std: float) -> torch.Tensor:
            return std * torch.randn(*shape, generator=generator, dtype=dtype)

        if self.config.gate == GateForm.SIMPLE:
            self.W_gate = nn.Parameter(gaussian(parent_count, k, concat_dim, std=1.0 / math.sqrt(concat_dim)))
            return

        d_align, d_ctx = self.config.align_dim, self.config.context_dim
        self.W_align = nn.Parameter(gaussian(k, d_align, concat_dim, std=1.0 / math.sqrt(concat_dim)))
        self.w_align = nn.Parameter(gaussian(k, d_align, std=1.0 / math.sqrt(d_align)))
        self.W_ctx = nn.Parameter(gaussian(d_ctx, concat_dim, std=1.0 / math.sqrt(concat_dim)))
        self.W_C = nn.Parameter(gaussian(k, d_ctx, std=1.0 / math.sqrt(d_ctx)))
        self.alpha_curv = nn.Parameter(torch.ones((), dtype=dtype))
        self.alpha_align = nn.Parameter(torch.ones((), dtype=dtype))
        self.alpha_route = nn.Parameter(torch.ones((), dtype=dtype))

    @property
    def num_perspectives(self) -> int:
        return self.W_sph.shape[2]

    def predict(self, children: torch.Tensor, check: bool = True) -> torch.Tensor:
        """Perspective predictions on the output manifold, (B, N_c, N_p, K, D_out)."""
        sphere_free, euclid = reduced_tangent(self.in_manifold, children, check=check)
        sphere_out = _apply_blockwise(self.W_sph, sphere_free)
        euclid_out = _apply_blockwise(self.W_euc, euclid)
        return from_reduced_tangent(self.out_manifold, sphere_out, euclid_out)

    def gate(
        self,
        log_u: torch.Tensor,
        log_v_prev: torch.Tensor,
        c: torch.Tensor,
    ) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        """
        Gating weights gamma (B, N_c, N_p, K) and the routing context h.

        PCR layers return gamma = 1 with a single perspective.
        """
        batch, n_children, n_parents = c.shape
        if self.config.mode == RoutingMode.PCR:
            return torch.ones(batch, n_children, n_parents, 1, dtype=c.dtype, device=c.device), None

        lu = log_u.unsqueeze(2).expand(-1, -1, n_parents, -1)
        lv = log_v_prev.unsqueeze(1).expand(-1, n_children, -1, -1)
        z = torch.cat([lu, lv], dim=-1)

        if self.config.gate == GateForm.SIMPLE:
            return simplified_gate(z, self.W_gate), None

        k = self.num_perspectives
        logits = c.new_zeros(batch, n_children, n_parents, k)
        if self.config.uses_term(GateTerm.CURVATURE):
            kappa = cosine(lu, lv)
            logits = logits + self.alpha_curv * curvature_compat(kappa.unsqueeze(-1), self.beta_k)
        if self.config.uses_term(GateTerm.ALIGNMENT):
            logits = logits + self.alpha_align * alignment_term(z, self.w_align, self.W_align)
        h = torch.matmul(z, self.W_ctx.t())
        if self.config.uses_term(GateTerm.CONSISTENCY):
            logits = logits + self.alpha_route * consistency_term(c, self.W_C, h)
        return torch.sigmoid(logits), h


# ============================================================================
# Routing Loop
# ============================================================================

def prr_routing(
    children: Union[PseudoPoint, torch.Tensor],
    params: Union[PerspectiveParams, nn.Module],
    cfg: Optional[RoutingConfig] = None,
    sigma: Activation = torch.tanh,
    trace: bool = False,
    layer_index: Optional[int] = None,
):
    """
    Route child capsules to parent capsules.

    Per iteration: coupling softmax over parents, gated composite weights
    renormalized per parent, tangent-space aggregation, exp at the origin,
    tangent activation with projection, then a gate-weighted agreement
    update of the logits.

    Args:
        children: Child capsules, (N_c, D_in) or (B, N_c, D_in)
        params: PerspectiveParams (or a layer with a `W` tensor for euclidean mode)
        cfg: Routing configuration (defaults to params.config)
        sigma: Tangent-space nonlinearity
        trace: Also return per-iteration RoutingState snapshots
        layer_index: Included in RoutingError context

    Returns:
        Parents as a PseudoPoint (euclidean mode: a tensor), plus the trace if requested

    Raises:
        RoutingError: a geometric operation failed inside the loop
    """
    cfg = cfg or params.config
    coords = children.coords if isinstance(children, PseudoPoint) else children

    if cfg.mode == RoutingMode.EUCLIDEAN:
        return euclid_route(coords, params.W, cfg, trace=trace)

    unbatched = coords.dim() == 2
    if unbatched:
        coords = coords.unsqueeze(0)
    if cfg.child_count is not None and coords.shape[-2] != cfg.child_count:
        raise DimensionMismatchError(f"layer expects {cfg.child_count} children, got {coords.shape[-2]}")

    m_in, m_out = params.in_manifold, params.out_manifold
    states: RoutingTrace = []
    iteration = None

    try:
        if cfg.check_closure:
            m_in.check_membership(coords, "child capsule")
        log_u = m_in.log_o(coords)
        predictions = params.predict(coords)
        if cfg.check_closure:
            m_out.check_membership(predictions, "prediction")
        xi = m_out.log_o(predictions)

        batch, n_children, n_parents = xi.shape[:3]
        b = xi.new_zeros(batch, n_children, n_parents)
        v = m_out.origin((batch, n_parents), dtype=xi.dtype, device=xi.device)
        log_v = torch.zeros_like(v)

        for iteration in range(cfg.iterations):
            c = torch.softmax(b, dim=-1)
            gamma, h = params.gate(log_u, log_v, c)
            weights = normalize_composite(c.unsqueeze(-1) * gamma, dims=(1, 3))
            s = m_out.exp_o(torch.einsum('nijk,nijkd->njd', weights, xi))
            v_prev, v = v, activate_tangent(m_out, s, sigma)
            if cfg.check_closure:
                m_out.check_membership(s, "aggregated parent")
                m_out.check_membership(v, "activated parent")
            log_v = m_out.log_o(v)
            agreement = torch.einsum('njd,nijkd->nijk', log_v, xi)
            b = b + (gamma * agreement).sum(dim=-1)
            if trace:
                states.append(RoutingState(
                    iteration=iteration, b=b, c=c, gamma=gamma,
                    parents=v, prev_parents=v_prev, h=h,
                ))
    except GeometryError as exc:
        raise RoutingError(str(exc), layer=layer_index, iteration=iteration) from exc

    if unbatched:
        v = v.squeeze(0)
    parents = PseudoPoint(v, m_out.signature, m_out.curvature)
    return (parents, states) if trace else parents


class PseudoRiemannianCapsuleLayer(nn.Module):
    """
    Capsule layer running PCR or ACR routing between two manifolds.

    Args:
        child_count: N_c
        parent_count: N_p
        in_signature: Child manifold signature
        out_signature: Parent manifold signature
        config: Routing configuration
        beta: Curvature of both manifolds
        generator: Seeded generator for initialization
        layer_index: Position in the model (for error context)
    """

    def __init__(
        self,
        child_count: int,
        parent_count: int,
        in_signature: Signature,
        out_signature: Signature,
        config: RoutingConfig,
        beta: CurvatureLike = -1.0,
        generator: Optional[torch.Generator] = None,
        layer_index: Optional[int] = None,
        sigma: Activation = torch.tanh,
    ):
        super().__init__()
        self.params = PerspectiveParams(
            in_signature, out_signature, child_count, parent_count, config,
            in_beta=beta, out_beta=beta, generator=generator,
        )
        self.layer_index = layer_index
        self.sigma = sigma

    @property
    def config(self) -> RoutingConfig:
        return self.params.config

    @property
    def out_manifold(self) -> PseudoHyperboloid:
        return self.params.out_manifold

    def forward(self, children: torch.Tensor, trace: bool = False):
        result = prr_routing(children, self.params, sigma=self.sigma, trace=trace, layer_index=self.layer_index)
        if trace:
            parents, states = result
            return parents.coords, states
        return result.coords
