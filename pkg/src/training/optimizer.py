"""
Adaptive-moment optimizer.

Every trainable tensor in the model is an unconstrained Euclidean
parameter (matrices, scalars, tangent-space prototypes), so Riemannian
Adam reduces to ordinary bias-corrected Adam here. Weight decay is the
decoupled form of torch.optim.AdamW.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import torch
from pydantic import BaseModel, ConfigDict, Field

from src.utils.errors import DimensionMismatchError

logger = logging.getLogger(__name__)


class OptimizerConfig(BaseModel):
    """Hyperparameters of the adaptive-moment update."""
    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(1e-3, gt=0, description="Constant learning rate")
    weight_decay: float = Field(1e-4, ge=0, description="Decoupled L2 weight decay")
    betas: Tuple[float, float] = Field((0.9, 0.999), description="Moment decay rates")
    eps: float = Field(1e-8, gt=0, description="Denominator epsilon")


def build_optimizer(params: Iterable[torch.Tensor], config: Optional[OptimizerConfig] = None) -> torch.optim.AdamW:
    """AdamW over `params` with a fixed (single-threaded, non-fused) update order."""
    config = config or OptimizerConfig()
    return torch.optim.AdamW(
        list(params),
        lr=config.learning_rate,
        betas=tuple(config.betas),
        eps=config.eps,
        weight_decay=config.weight_decay,
        foreach=False,
    )


@dataclass
class OptimizerState:
    """
    Optimizer plus the parameters it updates.

    Moments and the step counter live in the wrapped AdamW; the accessors
    expose them without reaching into torch internals at call sites.
    """
    optimizer: torch.optim.AdamW
    params: List[torch.Tensor]
    config: OptimizerConfig

    @classmethod
    def create(cls, params: Iterable[torch.Tensor], config: Optional[OptimizerConfig] = None) -> "OptimizerState":
        params = list(params)
        config = config or OptimizerConfig()
        return cls(build_optimizer(params, config), params, config)

    @property
    def step(self) -> int:
        steps = [int(s["step"]) for s in self.optimizer.state.values() if "step" in s]
        return max(steps) if steps else 0

    def moments(self, param: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """(first, second) moment of one parameter; zeros before the first step."""
        state = self.optimizer.state.get(param, {})
        if "exp_avg" not in state:
            return torch.zeros_like(param), torch.zeros_like(param)
        return state["exp_avg"], state["exp_avg_sq"]

    def to_dict(self) -> Dict[str, Any]:
        return {"step": self.step, **self.config.model_dump()}


def optimizer_step(
    params: Sequence[torch.Tensor],
    grads: Sequence[torch.Tensor],
    state: OptimizerState,
) -> OptimizerState:
    """
    One bias-corrected adaptive-moment update of `params` with `grads`.

    Raises:
        DimensionMismatchError: a gradient's shape differs from its parameter
    """
    params, grads = list(params), list(grads)
    if len(params) != len(grads):
        raise DimensionMismatchError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionMismatchError(f"gradient shape {tuple(g.shape)} != parameter shape {tuple(p.shape)}")
        p.grad = g.detach().clone()
    state.optimizer.step()
    return state
