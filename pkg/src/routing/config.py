"""
Routing configuration and per-iteration routing state.

RoutingConfig is a pydantic model so that it validates the same way when
built in code, read from a YAML config section or overridden by a CLI
flag. RoutingState is a plain dataclass snapshot of one routing
iteration, returned when prr_routing is asked for a trace.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional

import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator


class RoutingMode(str, Enum):
    """Which routing algorithm a capsule layer runs."""
    EUCLIDEAN = "euclidean"
    PCR = "pcr"
    ACR = "acr"


class GateForm(str, Enum):
    """Gate used by adaptive curvature routing."""
    FULL = "full"        # curvature + alignment + consistency terms
    SIMPLE = "simple"    # single matrix on [log u || log v_prev]


class GateTerm(str, Enum):
    """Terms of the full gate that can be ablated."""
    CURVATURE = "curvature"
    ALIGNMENT = "alignment"
    CONSISTENCY = "consistency"


class RoutingConfig(BaseModel):
    """
    Configuration for one (or every) capsule routing layer.

    Educational Note:
    PCR is the single-perspective special case of ACR with every gate
    fixed to 1, so effective_perspectives is 1 for PCR regardless of
    num_perspectives.
    """
    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    mode: RoutingMode = Field(RoutingMode.ACR, description="euclidean | pcr | acr")
    iterations: int = Field(3, ge=1, le=50, description="Routing iterations T")
    num_perspectives: int = Field(4, ge=1, le=64, description="Perspectives K (ACR only)")
    gate: GateForm = Field(GateForm.FULL, description="full three-term gate or simple matrix gate")
    gate_terms: List[GateTerm] = Field(
        default_factory=lambda: [GateTerm.CURVATURE, GateTerm.ALIGNMENT, GateTerm.CONSISTENCY],
        description="Terms kept in the full gate"
    )
    share_weights: bool = Field(True, description="Share transformation weights across children")
    learn_curvature: bool = Field(True, description="Train the perspective curvatures beta_k")
    align_dim: int = Field(16, ge=1, description="Hidden width of the feature-alignment term")
    context_dim: int = Field(16, ge=1, description="Width of the routing-context vector h_ij")
    check_closure: bool = Field(False, description="Assert manifold membership of every routing intermediate")
    child_count: Optional[int] = Field(None, ge=1, description="N_c, fixed per layer")
    parent_count: Optional[int] = Field(None, ge=1, description="N_p, fixed per layer")

    @field_validator("gate_terms")
    @classmethod
    def _unique_terms(cls, value: List[GateTerm]) -> List[GateTerm]:
        if len(set(value)) != len(value):
            raise ValueError("gate_terms must not repeat a term")
        return value

    @property
    def effective_perspectives(self) -> int:
        return 1 if self.mode == RoutingMode.PCR else self.num_perspectives

    def uses_term(self, term: GateTerm) -> bool:
        return term in self.gate_terms

    def for_layer(self, child_count: int, parent_count: int) -> "RoutingConfig":
        """Copy with the layer's capsule counts filled in."""
        return self.model_copy(update={"child_count": child_count, "parent_count": parent_count})


@dataclass
class RoutingState:
    """
    Snapshot of one routing iteration.

    Shapes (B = batch, N_c children, N_p parents, K perspectives):
        b, c: (B, N_c, N_p)
        gamma: (B, N_c, N_p, K)
        parents, prev_parents: (B, N_p, D_out) manifold coordinates
        h: (B, N_c, N_p, d_ctx) routing context, None unless the full gate ran
    """
    iteration: int
    b: torch.Tensor
    c: torch.Tensor
    gamma: torch.Tensor
    parents: torch.Tensor
    prev_parents: torch.Tensor
    h: Optional[torch.Tensor] = None

    def to_dict(self) -> Dict[str, Any]:
        """Summary statistics for logging (no raw tensors)."""
        return {
            "iteration": self.iteration,
            "coupling_row_sum_max_error": float((self.c.sum(dim=-1) - 1.0).abs().max()),
            "gamma_min": float(self.gamma.min()),
            "gamma_max": float(self.gamma.max()),
        }


RoutingTrace = List[RoutingState]
