"""
Capsule routing between layers of capsules.

Euclidean routing by agreement, pseudo-Riemannian capsule routing (PCR)
and adaptive curvature routing (ACR) with its curvature-aware gate.
"""

from .config import GateForm, GateTerm, RoutingConfig, RoutingMode, RoutingState, RoutingTrace
from .euclidean import EuclideanCapsuleLayer, euclid_route, predict_votes, squash
from .layers import (
    PerspectiveParams,
    PseudoRiemannianCapsuleLayer,
    initial_perspective_curvatures,
    prr_routing,
)
from .pseudo_riemannian import (
    acr_aggregate,
    curvature_compat,
    feature_alignment,
    gating_weights,
    local_curvature_estimate,
    normalize_composite,
    pcr_activate,
    pcr_aggregate,
    pcr_predict,
    routing_consistency,
    simplified_gate,
    update_logits_pcr,
)

__all__ = [
    # Configuration and state
    "RoutingConfig",
    "RoutingMode",
    "GateForm",
    "GateTerm",
    "RoutingState",
    "RoutingTrace",
    # Euclidean routing
    "squash",
    "predict_votes",
    "euclid_route",
    "EuclideanCapsuleLayer",
    # Pseudo-Riemannian routing
    "pcr_predict",
    "pcr_aggregate",
    "pcr_activate",
    "update_logits_pcr",
    "local_curvature_estimate",
    "curvature_compat",
    "feature_alignment",
    "routing_consistency",
    "gating_weights",
    "simplified_gate",
    "acr_aggregate",
    "normalize_composite",
    # Layers
    "PerspectiveParams",
    "PseudoRiemannianCapsuleLayer",
    "initial_perspective_curvatures",
    "prr_routing",
]
