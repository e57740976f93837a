"""
Graph datasets: in-memory models, file formats, batching and synthetic
generators.
"""

from .batching import GraphBatch, normalized_adjacency
from .dataset import (
    SPLITS,
    Graph,
    GraphDataset,
    Task,
    normalize_edges,
    normalize_features,
    stratified_split,
)
from .loaders import (
    load_graph_dataset,
    load_node_dataset,
    load_tu_dataset,
    save_graph_dataset,
    save_node_dataset,
)
from .synthetic import MotifLabel, SyntheticFamily, SyntheticSpec, degree_features, generate_synthetic

__all__ = [
    # Models
    "SPLITS",
    "Task",
    "Graph",
    "GraphDataset",
    "normalize_edges",
    "normalize_features",
    "stratified_split",
    # Batching
    "GraphBatch",
    "normalized_adjacency",
    # File formats
    "load_node_dataset",
    "save_node_dataset",
    "load_graph_dataset",
    "save_graph_dataset",
    "load_tu_dataset",
    # Synthetic data
    "SyntheticFamily",
    "SyntheticSpec",
    "MotifLabel",
    "degree_features",
    "generate_synthetic",
]
