"""
Model configuration.

ModelConfig carries every architectural hyperparameter of the capsule
network with its default pre-filled, and the routing configuration it
passes to every capsule layer.
"""

from enum import Enum
from typing import List

from pydantic import BaseModel, ConfigDict, Field

from src.data.dataset import Task
from src.geometry.types import Signature
from src.routing.config import RoutingConfig, RoutingMode


class ClassifierMode(str, Enum):
    """Head that turns class capsules (or node embeddings) into scores."""
    LINEAR = "linear"    # softmax regression on flattened tangent coordinates
    PRCC = "prcc"        # curvature-weighted cosine against class prototypes


class ModelConfig(BaseModel):
    """
    Architecture of a capsule network.

    Educational Note:
    A capsule here has s + t + 1 coordinates: t + 1 "time" coordinates on
    which the metric is negative and s "space" coordinates on which it is
    positive. The default s = t = 9 gives 19-dimensional capsules.
    """
    model_config = ConfigDict(extra="forbid")

    encoder_dim: int = Field(64, ge=1, description="Width of the GNN node embeddings")
    capsule_layers: int = Field(3, ge=1, le=16, description="Stacked routing layers")
    s: int = Field(9, ge=1, description="Space (positive) coordinates per capsule")
    t: int = Field(9, ge=1, description="Time dimension; capsules carry t + 1 time coordinates")
    beta: float = Field(-1.0, lt=0, description="Curvature of every capsule manifold (fixed)")
    primary_capsules: int = Field(8, ge=1, description="Capsules lifted from each node embedding")
    hidden_capsules: int = Field(8, ge=1, description="Parents of every hidden routing layer")
    dropout: float = Field(0.5, ge=0.0, lt=1.0, description="Dropout on embeddings and tangent vectors")
    capsules: bool = Field(True, description="False drops the routing layers (plain GNN head or PRCC on lifted capsules)")
    classifier: ClassifierMode = Field(ClassifierMode.PRCC, description="linear | prcc")
    learn_classifier_curvature: bool = Field(True, description="Train the classifier curvature weight")
    task: Task = Field(Task.NODE, description="node | graph")
    routing: RoutingConfig = Field(default_factory=RoutingConfig)

    @property
    def signature(self) -> Signature:
        return Signature(self.s, self.t)

    @property
    def capsule_dim(self) -> int:
        return self.s + self.t + 1

    @property
    def routing_mode(self) -> str:
        """Routing mode value, or "none" when capsules are off."""
        return self.routing.mode.value if self.capsules else "none"

    @property
    def on_manifold(self) -> bool:
        """Whether capsules live on the pseudo-hyperboloid (everything except Euclidean routing)."""
        return not (self.capsules and self.routing.mode == RoutingMode.EUCLIDEAN)

    def capsule_counts(self, num_classes: int) -> List[int]:
        """Capsules per level: primary, hidden..., classes."""
        return [self.primary_capsules] + [self.hidden_capsules] * (self.capsule_layers - 1) + [num_classes]
