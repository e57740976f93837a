"""
Graph dataset models for node- and graph-classification tasks.

A GraphDataset is a list of Graphs plus split masks. The node task has a
single graph and masks over its nodes; the graph task has many graphs,
each with one label, and masks over graphs.

Educational Note:
Edges are stored once per undirected pair with the smaller index first,
so "is (u, v) an edge" never depends on which direction a file listed it
in. Self-loops are kept only when the source had them and are flagged on
the graph.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import (
    DatasetError,
    EdgeRangeError,
    LabelRangeError,
    OverlappingMasksError,
    RaggedRowsError,
)

logger = logging.getLogger(__name__)

SPLITS: Tuple[str, ...] = ("train", "val", "test")


class Task(str, Enum):
    """Learning task a dataset is for."""
    NODE = "node"
    GRAPH = "graph"


# ============================================================================
# Edge Normalization
# ============================================================================

def normalize_edges(raw_edges, node_count: int) -> Tuple[np.ndarray, bool]:
    """
    Deduplicate undirected edges, smaller endpoint first, sorted.

    Args:
        raw_edges: (E, 2) integer array-like, any orientation, duplicates allowed
        node_count: Number of nodes

    Returns:
        (edges (E', 2) int64, whether any self-loop is present)

    Raises:
        EdgeRangeError: if an endpoint is outside [0, node_count)
    """
    edges = np.asarray(raw_edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= node_count):
        bad = edges[(edges < 0).any(axis=1) | (edges >= node_count).any(axis=1)][0]
        raise EdgeRangeError(
            f"edge ({bad[0]}, {bad[1]}) has an endpoint outside [0, {node_count})"
        )
    if not edges.size:
        return np.zeros((0, 2), dtype=np.int64), False
    edges = np.sort(edges, axis=1)
    edges = np.unique(edges, axis=0)
    return edges, bool((edges[:, 0] == edges[:, 1]).any())


# ============================================================================
# Graph
# ============================================================================

@dataclass
class Graph:
    """
    A single undirected graph with node features.

    Attributes:
        node_count: Number of nodes
        edges: (E, 2) int64, each undirected edge once, smaller index first
        features: (node_count, F) float64
        node_labels: (node_count,) int64 for the node task
        label: Graph label for the graph task
        has_self_loops: Whether the source listed self-loops
    """
    node_count: int
    edges: np.ndarray
    features: np.ndarray
    node_labels: Optional[np.ndarray] = None
    label: Optional[int] = None
    has_self_loops: bool = False

    @classmethod
    def from_raw(cls, node_count: int, raw_edges, features, node_labels=None, label=None) -> "Graph":
        """Build a graph, normalizing edges and array dtypes."""
        edges, loops = normalize_edges(raw_edges, node_count)
        return cls(
            node_count=int(node_count),
            edges=edges,
            features=np.asarray(features, dtype=np.float64),
            node_labels=None if node_labels is None else np.asarray(node_labels, dtype=np.int64),
            label=None if label is None else int(label),
            has_self_loops=loops,
        )

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    def validate(self, num_classes: Optional[int] = None, where: str = "graph") -> None:
        """Raise a DatasetError subclass for the first invariant violation found."""
        if self.node_count < 1:
            raise DatasetError(f"{where}: graph has no nodes")
        if self.features.ndim != 2 or self.features.shape[0] != self.node_count:
            raise RaggedRowsError(
                f"{where}: features have shape {self.features.shape}, expected ({self.node_count}, F)"
            )
        if not np.isfinite(self.features).all():
            raise DatasetError(f"{where}: features contain NaN or Inf")
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= self.node_count):
            raise EdgeRangeError(f"{where}: edge endpoint outside [0, {self.node_count})")
        if self.edges.size:
            if (self.edges[:, 0] > self.edges[:, 1]).any():
                raise DatasetError(f"{where}: edges are not normalized (smaller index first)")
            if np.unique(self.edges, axis=0).shape[0] != self.edges.shape[0]:
                raise DatasetError(f"{where}: duplicate edges after normalization")
        if self.node_labels is not None:
            if self.node_labels.shape != (self.node_count,):
                raise RaggedRowsError(
                    f"{where}: {self.node_labels.shape[0]} labels for {self.node_count} nodes"
                )
            _check_labels(self.node_labels, num_classes, where)
        if self.label is not None:
            _check_labels(np.asarray([self.label]), num_classes, where)


def _check_labels(labels: np.ndarray, num_classes: Optional[int], where: str) -> None:
    if labels.size and labels.min() < 0:
        raise LabelRangeError(f"{where}: label {int(labels.min())} is negative")
    if num_classes is not None and labels.size and labels.max() >= num_classes:
        raise LabelRangeError(f"{where}: label {int(labels.max())} out of range [0, {num_classes})")


# ============================================================================
# Dataset
# ============================================================================

@dataclass
class GraphDataset:
    """
    Graphs plus labels and train/val/test masks.

    For the node task, `graphs` has one entry and masks index its nodes.
    For the graph task, masks index graphs.
    """
    task: Task
    graphs: List[Graph]
    num_classes: int
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    name: str = ""
    metadata: Dict[str, Any] = field(default_factory=dict)

    # ------------------------------------------------------------------------
    # Views
    # ------------------------------------------------------------------------

    @property
    def graph(self) -> Graph:
        """The single graph of a node-task dataset."""
        if self.task != Task.NODE:
            raise DatasetError("graph-task datasets hold many graphs; use .graphs")
        return self.graphs[0]

    @property
    def num_features(self) -> int:
        return int(self.graphs[0].features.shape[1])

    @property
    def num_targets(self) -> int:
        """Nodes (node task) or graphs (graph task) that carry a label."""
        return self.graph.node_count if self.task == Task.NODE else len(self.graphs)

    @property
    def labels(self) -> np.ndarray:
        """Node labels (node task) or one label per graph (graph task)."""
        if self.task == Task.NODE:
            return self.graph.node_labels
        return np.asarray([g.label for g in self.graphs], dtype=np.int64)

    def mask(self, split: str) -> np.ndarray:
        if split not in SPLITS:
            raise ValueError(f"Unknown split '{split}'; expected one of {SPLITS}")
        return getattr(self, f"{split}_mask")

    def split_indices(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.mask(split))

    def summary(self) -> Dict[str, int]:
        """Counts reported by the CLI."""
        return {
            "nodes": int(sum(g.node_count for g in self.graphs)),
            "edges": int(sum(g.edge_count for g in self.graphs)),
            "classes": int(self.num_classes),
            "graphs": len(self.graphs),
            "features": self.num_features,
        }

    def with_features(self, features: Sequence[np.ndarray]) -> "GraphDataset":
        """Copy with per-graph feature matrices replaced."""
        graphs = [replace(g, features=np.asarray(f, dtype=np.float64)) for g, f in zip(self.graphs, features)]
        return replace(self, graphs=graphs)

    # ------------------------------------------------------------------------
    # Validation
    # ------------------------------------------------------------------------

    def validate(self) -> "GraphDataset":
        """
        Check every dataset invariant.

        Raises:
            DatasetError subclasses naming the violated condition
        """
        if not self.graphs:
            raise DatasetError("dataset has no graphs")
        if self.num_classes < 1:
            raise LabelRangeError(f"num_classes must be positive, got {self.num_classes}")
        if self.task == Task.NODE:
            if len(self.graphs) != 1:
                raise DatasetError(f"node-task dataset must hold exactly one graph, got {len(self.graphs)}")
            if self.graph.node_labels is None:
                raise DatasetError("node-task dataset has no node labels")
        else:
            missing = [i for i, g in enumerate(self.graphs) if g.label is None]
            if missing:
                raise DatasetError(f"graph {missing[0]} has no label")
            widths = {g.features.shape[1] if g.features.ndim == 2 else -1 for g in self.graphs}
            if len(widths) != 1:
                raise RaggedRowsError(f"graphs disagree on feature width: {sorted(widths)}")

        for i, g in enumerate(self.graphs):
            g.validate(self.num_classes, where=f"graph {i}" if self.task == Task.GRAPH else "graph")

        n = self.num_targets
        masks = [np.asarray(self.mask(s), dtype=bool) for s in SPLITS]
        for split, mask in zip(SPLITS, masks):
            if mask.shape != (n,):
                raise RaggedRowsError(f"{split} mask has shape {mask.shape}, expected ({n},)")
        overlap = (masks[0].astype(int) + masks[1].astype(int) + masks[2].astype(int)) > 1
        if overlap.any():
            raise OverlappingMasksError(
                f"{int(overlap.sum())} items are in more than one split (first: {int(np.flatnonzero(overlap)[0])})"
            )
        return self


# ============================================================================
# Splits and Feature Scaling
# ============================================================================

def stratified_split(
    labels: np.ndarray,
    fractions: Tuple[float, float, float],
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Random per-class split into train/val/test masks.

    Each class is shuffled with rng and cut at rounded fractions; the
    remainder goes to test.
    """
    labels = np.asarray(labels)
    train, val, test = (np.zeros(labels.shape[0], dtype=bool) for _ in range(3))
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        n_train = int(round(fractions[0] * idx.size))
        n_val = int(round(fractions[1] * idx.size))
        train[idx[:n_train]] = True
        val[idx[n_train:n_train + n_val]] = True
        test[idx[n_train + n_val:]] = True
    return train, val, test


def normalize_features(dataset: GraphDataset) -> GraphDataset:
    """Row-wise L2 normalization; all-zero rows stay zero."""
    scaled = []
    for g in dataset.graphs:
        norms = np.linalg.norm(g.features, axis=1, keepdims=True)
        scaled.append(np.divide(g.features, norms, out=np.zeros_like(g.features), where=norms > 0))
    return dataset.with_features(scaled)
