"""
Pseudo-Riemannian capsule routing operations.

Child capsules are points on a pseudo-hyperboloid. A prediction is made
by splitting the child with psi, transforming the sphere part in the
tangent space at the sphere pole and the Euclidean part linearly, and
recombining on the output manifold. Parents are tangent-space weighted
means mapped back with exp at the origin, followed by a tangent-space
nonlinearity and a projection onto the manifold.

Adaptive curvature routing adds K perspectives per (child, parent) pair
and a sigmoid gate built from three terms:

    curvature compatibility  -1/2 (kappa - beta_k)^2
    feature alignment        w_k . tanh(W_align_k [log u || log v_prev])
    routing consistency      log(c_ij) * (W_C h_ij)_k

Note:
The functions here accept PseudoPoints and broadcast over any leading
batch axes. The tensor helpers at the bottom are what the routing layer
runs on its (batch, child, parent, perspective) grids.
"""

import logging
from typing import Callable, Optional, Sequence, Tuple, Union

import torch

from src.geometry.manifold import PseudoHyperboloid
from src.geometry.ops import cosine, manifold_of
from src.geometry.policy import get_policy
from src.geometry.types import CurvatureLike, PseudoPoint, Signature, as_tensor
from src.utils.errors import DimensionMismatchError

logger = logging.getLogger(__name__)

Activation = Callable[[torch.Tensor], torch.Tensor]


# ============================================================================
# Tangent Helpers
# ============================================================================

def reduced_tangent(manifold: PseudoHyperboloid, x: torch.Tensor, check: bool = True) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Free tangent coordinates of x at the origin.

    Returns the t free sphere-tangent coordinates (the pole coordinate is
    always zero) and the s Euclidean coordinates.
    """
    tangent = manifold.log_o(x, check=check)
    td = manifold.time_dim
    return tangent[..., 1:td], tangent[..., td:]


def from_reduced_tangent(manifold: PseudoHyperboloid, sphere_free: torch.Tensor, euclid: torch.Tensor) -> torch.Tensor:
    """Point for free tangent coordinates (inverse of reduced_tangent)."""
    zero = torch.zeros_like(sphere_free[..., :1])
    return manifold.exp_o(torch.cat([zero, sphere_free, euclid], dim=-1))


def activate_tangent(manifold: PseudoHyperboloid, x: torch.Tensor, sigma: Activation) -> torch.Tensor:
    """project(exp_o(sigma(log_o(x)))) with the pole coordinate kept at zero."""
    tangent = sigma(manifold.log_o(x))
    tangent = torch.cat([torch.zeros_like(tangent[..., :1]), tangent[..., 1:]], dim=-1)
    return manifold.project(manifold.exp_o(tangent))


def normalize_composite(weights: torch.Tensor, dims: Sequence[int]) -> torch.Tensor:
    """
    Renormalize nonnegative weights to sum to one over dims.

    Groups whose weights are all zero fall back to uniform weights.
    """
    total = weights.sum(dim=tuple(dims), keepdim=True)
    positive = total > 0
    safe_total = torch.where(positive, total, torch.ones_like(total))
    count = 1
    for d in dims:
        count *= weights.shape[d]
    return torch.where(positive, weights / safe_total, torch.full_like(weights, 1.0 / count))


# ============================================================================
# Pseudo-Riemannian Capsule Routing
# ============================================================================

def pcr_predict(
    u_i: PseudoPoint,
    W_sph: torch.Tensor,
    W_euc: torch.Tensor,
    out_beta: CurvatureLike = -1.0,
) -> PseudoPoint:
    """
    Prediction of a parent capsule from child u_i.

    Args:
        u_i: Child point(s) on the input manifold
        W_sph: (..., t_out, t_in) map on free sphere-tangent coordinates
        W_euc: (..., s_out, s_in) map on Euclidean coordinates
        out_beta: Curvature of the output manifold

    Returns:
        Prediction on the output manifold with signature (s_out, t_out)

    Raises:
        CutLocusError: if u_i's sphere part is antipodal to the pole
    """
    sig = u_i.signature
    W_sph, W_euc = as_tensor(W_sph), as_tensor(W_euc)
    if W_sph.shape[-1] != sig.t or W_euc.shape[-1] != sig.s:
        raise DimensionMismatchError(
            f"W_sph (.., {W_sph.shape[-1]}) and W_euc (.., {W_euc.shape[-1]}) "
            f"do not match input signature (s={sig.s}, t={sig.t})"
        )
    out_sig = Signature(s=W_euc.shape[-2], t=W_sph.shape[-2])
    out_manifold = PseudoHyperboloid(out_sig, out_beta)

    sphere_free, euclid = reduced_tangent(manifold_of(u_i), u_i.coords)
    sphere_out = torch.matmul(W_sph, sphere_free.unsqueeze(-1)).squeeze(-1)
    euclid_out = torch.matmul(W_euc, euclid.unsqueeze(-1)).squeeze(-1)
    return PseudoPoint(from_reduced_tangent(out_manifold, sphere_out, euclid_out), out_sig, out_manifold.curvature)


def pcr_aggregate(preds: PseudoPoint, c: torch.Tensor) -> PseudoPoint:
    """
    Tangent-space weighted mean: exp_o(sum_i c_i log_o(pred_i)).

    Args:
        preds: Predictions with children on the second-to-last axis (..., N_c, D)
        c: Coupling weights (..., N_c)
    """
    manifold = manifold_of(preds)
    tangent = manifold.log_o(preds.coords)
    c = as_tensor(c)
    return preds.with_coords(manifold.exp_o((c.unsqueeze(-1) * tangent).sum(dim=-2)))


def pcr_activate(s_j: PseudoPoint, sigma: Activation = torch.tanh) -> PseudoPoint:
    """Tangent-space nonlinearity followed by projection onto the manifold."""
    return s_j.with_coords(activate_tangent(manifold_of(s_j), s_j.coords, sigma))


def update_logits_pcr(
    b: torch.Tensor,
    v_j: PseudoPoint,
    preds: PseudoPoint,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Agreement update b_ij += <log_o(v_j), log_o(u_hat_j|i)>.

    Args:
        b: Logits (..., N_c, N_p)
        v_j: Parents (..., N_p, D)
        preds: Predictions (..., N_c, N_p, D)

    Returns:
        (updated logits, coupling coefficients softmax over parents)
    """
    manifold = manifold_of(preds)
    agreement = (manifold.log_o(v_j.coords).unsqueeze(-3) * manifold.log_o(preds.coords)).sum(dim=-1)
    b = b + agreement
    return b, torch.softmax(b, dim=-1)


# ============================================================================
# Adaptive Curvature Routing: Gate Terms
# ============================================================================

def local_curvature_estimate(u_i: PseudoPoint, v_prev: PseudoPoint) -> torch.Tensor:
    """Cosine between log_o(u_i) and log_o(v_prev); 0 if either is the origin."""
    if u_i.signature != v_prev.signature:
        raise DimensionMismatchError("local curvature estimate needs points of one signature")
    return cosine(manifold_of(u_i).log_o(u_i.coords), manifold_of(v_prev).log_o(v_prev.coords))


def curvature_compat(kappa: torch.Tensor, beta_k: torch.Tensor) -> torch.Tensor:
    """-1/2 (kappa - beta_k)^2; zero exactly when the estimate matches beta_k."""
    return -0.5 * (as_tensor(kappa) - as_tensor(beta_k)) ** 2


def alignment_term(z: torch.Tensor, w: torch.Tensor, W_align: torch.Tensor) -> torch.Tensor:
    """
    w . tanh(W_align z), vectorized over perspectives.

    Args:
        z: (..., 2D) concatenated tangent vectors
        w: (d_align,) or (K, d_align)
        W_align: (d_align, 2D) or (K, d_align, 2D)
    """
    if W_align.dim() == 2:
        return (torch.tanh(torch.matmul(z, W_align.t())) * w).sum(dim=-1)
    hidden = torch.tanh(torch.einsum('...d,kad->...ka', z, W_align))
    return (hidden * w).sum(dim=-1)


def feature_alignment(
    u_i: PseudoPoint,
    v_prev: PseudoPoint,
    w_k: torch.Tensor,
    W_align_k: torch.Tensor,
) -> torch.Tensor:
    """w_k . tanh(W_align_k [log_o(u_i) || log_o(v_prev)])."""
    z = torch.cat([manifold_of(u_i).log_o(u_i.coords), manifold_of(v_prev).log_o(v_prev.coords)], dim=-1)
    return alignment_term(z, as_tensor(w_k), as_tensor(W_align_k))


def consistency_term(c: torch.Tensor, W_C: torch.Tensor, h: torch.Tensor, eps: Optional[float] = None) -> torch.Tensor:
    """
    log(c) * (W_C h) for every perspective at once.

    Args:
        c: (...) coupling coefficients
        W_C: (K, d_ctx)
        h: (..., d_ctx) routing context

    Returns:
        (..., K)
    """
    eps = get_policy().log_eps if eps is None else eps
    log_c = torch.log(torch.clamp_min(c, eps))
    return log_c.unsqueeze(-1) * torch.matmul(h, W_C.t())


def routing_consistency(
    c_ij: Union[float, torch.Tensor],
    k: int,
    W_C: torch.Tensor,
    h_ij: torch.Tensor,
) -> torch.Tensor:
    """log(c_ij) * (row k of W_C) . h_ij, with c_ij floored before the log."""
    return consistency_term(as_tensor(c_ij), as_tensor(W_C), as_tensor(h_ij))[..., k]


def gating_weights(
    C: torch.Tensor,
    A: torch.Tensor,
    R: torch.Tensor,
    alphas: Sequence[Union[float, torch.Tensor]],
) -> torch.Tensor:
    """sigmoid(alpha_curv * C + alpha_align * A + alpha_route * R)."""
    alpha_curv, alpha_align, alpha_route = alphas
    return torch.sigmoid(alpha_curv * as_tensor(C) + alpha_align * as_tensor(A) + alpha_route * as_tensor(R))


def simplified_gate(z: torch.Tensor, W_gate: torch.Tensor) -> torch.Tensor:
    """
    Single-matrix gate sigmoid(W_gate[j, k] . z[i, j]).

    Args:
        z: (..., N_c, N_p, 2D) concatenated tangent vectors
        W_gate: (N_p, K, 2D)
    """
    return torch.sigmoid(torch.einsum('...jd,jkd->...jk', z, W_gate))


def acr_aggregate(preds: PseudoPoint, c: torch.Tensor, gamma: torch.Tensor) -> PseudoPoint:
    """
    Gated tangent-space mean over children and perspectives.

    Composite weights c_i * gamma_ik are renormalized to sum to one
    (uniform if they are all zero) before averaging.

    Args:
        preds: (..., N_c, K, D)
        c: (..., N_c)
        gamma: (..., N_c, K)
    """
    manifold = manifold_of(preds)
    weights = normalize_composite(as_tensor(c).unsqueeze(-1) * as_tensor(gamma), dims=(-2, -1))
    tangent = manifold.log_o(preds.coords)
    aggregated = (weights.unsqueeze(-1) * tangent).sum(dim=(-3, -2))
    return preds.with_coords(manifold.exp_o(aggregated))
