"""
Capsule network models.

This package contains:
- ModelConfig and the classifier modes
- The graph encoder and primary capsules
- PRCC and linear heads, graph readout and the loss
- PRCapsNet, the end-to-end model
- The PRCAPS1 checkpoint container
"""

from src.models.config import ClassifierMode, ModelConfig

from src.models.encoder import GNNEncoder, PrimaryCapsules, gnn_encode, lift_to_manifold

from src.models.classifier import (
    LinearHead,
    PRCCHead,
    classify_prcc,
    cross_entropy_loss,
    graph_readout,
    loss,
    prcc_logits,
    random_unit_tangents,
)

from src.models.prcapsnet import PRCapsNet, parameter_count

from src.models.checkpoint import Checkpoint, load_checkpoint, save_checkpoint

__all__ = [
    # Configuration
    'ModelConfig',
    'ClassifierMode',
    # Encoder
    'GNNEncoder',
    'PrimaryCapsules',
    'gnn_encode',
    'lift_to_manifold',
    # Heads and loss
    'PRCCHead',
    'LinearHead',
    'classify_prcc',
    'prcc_logits',
    'random_unit_tangents',
    'graph_readout',
    'loss',
    'cross_entropy_loss',
    # Model
    'PRCapsNet',
    'parameter_count',
    # Checkpoints
    'Checkpoint',
    'save_checkpoint',
    'load_checkpoint',
]
