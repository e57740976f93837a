"""
The end-to-end capsule network.

    features, adjacency
      -> GNNEncoder                      (N, encoder_dim)
      -> PrimaryCapsules                 (N, P0, D) on the manifold
      -> routing layers P0 -> H -> ... -> C
      -> class capsules                  (N or G, C, D)
      -> PRCC or linear head             (N or G, C) logits

For the graph task the node capsules entering the last routing layer are
pooled per graph (tangent mean), so the last layer routes graph capsules.

Ablation variants share this class:
    capsules=False, classifier=linear   plain GNN head on the embeddings
    capsules=False, classifier=prcc     PRCC on capsules lifted straight to C classes
    routing.mode=euclidean              Euclidean capsules with squash routing
"""

import logging
from typing import Optional, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from src.data.batching import GraphBatch
from src.data.dataset import Task
from src.geometry.manifold import PseudoHyperboloid
from src.routing.config import RoutingMode
from src.routing.euclidean import EuclideanCapsuleLayer
from src.routing.layers import PseudoRiemannianCapsuleLayer
from src.utils.seeding import torch_generator
from .classifier import LinearHead, PRCCHead, graph_readout, tangent_mean
from .config import ClassifierMode, ModelConfig
from .encoder import GNNEncoder, PrimaryCapsules

logger = logging.getLogger(__name__)


class PRCapsNet(nn.Module):
    """
    Graph encoder, capsule routing layers and classifier.

    Args:
        config: Model configuration
        in_features: Node feature width of the dataset
        num_classes: C
        seed: Run seed; parameters draw from its encoder, routing and
            classifier streams
    """

    def __init__(self, config: ModelConfig, in_features: int, num_classes: int, seed: int = 0):
        super().__init__()
        if num_classes < 1:
            raise ValueError(f"num_classes must be positive, got {num_classes}")
        self.config = config
        self.in_features = in_features
        self.num_classes = num_classes
        self.manifold: Optional[PseudoHyperboloid] = (
            PseudoHyperboloid(config.signature, config.beta) if config.on_manifold else None
        )

        encoder_gen = torch_generator(seed, "encoder")
        routing_gen = torch_generator(seed, "routing")
        classifier_gen = torch_generator(seed, "classifier")

        self.encoder = GNNEncoder(in_features, config.encoder_dim, encoder_gen)
        dim = config.capsule_dim
        self.layers = nn.ModuleList()
        self.primary: Optional[PrimaryCapsules] = None

        if config.capsules:
            counts = config.capsule_counts(num_classes)
            self.primary = PrimaryCapsules(
                config.encoder_dim, counts[0], dim, self.manifold, config.dropout, encoder_gen
            )
            for index, (n_in, n_out) in enumerate(zip(counts[:-1], counts[1:])):
                if config.routing.mode == RoutingMode.EUCLIDEAN:
                    layer = EuclideanCapsuleLayer(n_in, n_out, dim, dim, config.routing, routing_gen)
                else:
                    layer = PseudoRiemannianCapsuleLayer(
                        n_in, n_out, config.signature, config.signature, config.routing,
                        beta=config.beta, generator=routing_gen, layer_index=index,
                    )
                self.layers.append(layer)
        elif config.classifier == ClassifierMode.PRCC:
            self.primary = PrimaryCapsules(
                config.encoder_dim, num_classes, dim, self.manifold, config.dropout, encoder_gen
            )

        if config.classifier == ClassifierMode.PRCC:
            self.head = PRCCHead(
                num_classes, dim, beta=config.beta,
                learn_curvature=config.learn_classifier_curvature, generator=classifier_gen,
            )
        elif self.primary is None:
            self.head = LinearHead(config.encoder_dim, num_classes, classifier_gen)
        else:
            self.head = LinearHead(num_classes * dim, num_classes, classifier_gen)

        logger.debug(
            "Built PRCapsNet routing=%s classifier=%s params=%d",
            config.routing_mode, config.classifier.value, parameter_count(self)
        )

    # ------------------------------------------------------------------------
    # Forward
    # ------------------------------------------------------------------------

    def _to_tangent(self, capsules: torch.Tensor) -> torch.Tensor:
        return capsules if self.manifold is None else self.manifold.log_o(capsules)

    def _pool(self, values: torch.Tensor, batch: GraphBatch, manifold: Optional[PseudoHyperboloid]) -> torch.Tensor:
        if self.config.task != Task.GRAPH:
            return values
        if manifold is None:
            return tangent_mean(values, batch.graph_index, batch.num_graphs)
        return graph_readout(values, batch.graph_index, batch.num_graphs, manifold)

    def class_capsules(self, batch: GraphBatch) -> torch.Tensor:
        """
        Class capsules (manifold or Euclidean coordinates), (N or G, C, D).

        Raises:
            ValueError: the configuration has no capsules (plain GNN head)
        """
        if self.primary is None:
            raise ValueError("the plain GNN head has no class capsules")
        embedding = F.dropout(self.encoder(batch.features, batch.adjacency), p=self.config.dropout, training=self.training)
        capsules = self.primary(embedding)
        if self.manifold is not None and self.config.routing.check_closure:
            self.manifold.check_membership(capsules, "primary capsule")

        if not self.layers:
            return self._pool(capsules, batch, self.manifold)
        for layer in self.layers[:-1]:
            capsules = layer(capsules)
        capsules = self._pool(capsules, batch, self.manifold)
        return self.layers[-1](capsules)

    def forward_with_tangents(self, batch: GraphBatch) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        """Logits plus class-capsule tangents (None for the plain GNN head)."""
        if self.primary is None:
            embedding = F.dropout(
                self.encoder(batch.features, batch.adjacency), p=self.config.dropout, training=self.training
            )
            return self.head(self._pool(embedding, batch, None)), None
        tangents = self._to_tangent(self.class_capsules(batch))
        return self.head(tangents), tangents

    def forward(self, batch: GraphBatch) -> torch.Tensor:
        """Class logits per node (node task) or per graph (graph task)."""
        logits, _ = self.forward_with_tangents(batch)
        return logits

    def predict_proba(self, batch: GraphBatch) -> torch.Tensor:
        return torch.softmax(self.forward(batch), dim=-1)

    def embed(self, batch: GraphBatch) -> torch.Tensor:
        """
        Tangent vector of the winning class capsule per node (or graph).

        The plain GNN head has no capsules; its embeddings are returned.
        """
        logits, tangents = self.forward_with_tangents(batch)
        if tangents is None:
            embedding = self.encoder(batch.features, batch.adjacency)
            return self._pool(embedding, batch, None)
        winner = logits.argmax(dim=-1)
        return tangents[torch.arange(tangents.shape[0]), winner]


def parameter_count(model: nn.Module) -> int:
    """Number of trainable scalars."""
    return int(sum(p.numel() for p in model.parameters() if p.requires_grad))
