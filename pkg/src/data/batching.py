"""
Tensor batches built from graphs.

A GraphBatch is what the model consumes: node features, the symmetric
normalized adjacency with self-loops as a sparse tensor, and (for graph
batches) the graph each node belongs to.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch

from src.geometry.policy import get_policy
from src.utils.errors import DatasetError
from .dataset import Graph


def normalized_adjacency(edges: np.ndarray, node_count: int, dtype: Optional[torch.dtype] = None) -> torch.Tensor:
    """
    D^-1/2 (A + I) D^-1/2 as a coalesced sparse COO tensor.

    Each undirected edge contributes both directions; a self-loop listed
    in the source contributes once on top of the added identity.
    """
    dtype = dtype or get_policy().dtype
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    off_diagonal = edges[edges[:, 0] != edges[:, 1]]
    loops = edges[edges[:, 0] == edges[:, 1], 0]
    identity = np.arange(node_count, dtype=np.int64)

    rows = np.concatenate([off_diagonal[:, 0], off_diagonal[:, 1], loops, identity])
    cols = np.concatenate([off_diagonal[:, 1], off_diagonal[:, 0], loops, identity])
    degree = np.bincount(rows, minlength=node_count).astype(np.float64)
    values = 1.0 / np.sqrt(degree[rows] * degree[cols])

    adjacency = torch.sparse_coo_tensor(
        torch.from_numpy(np.stack([rows, cols])),
        torch.from_numpy(values).to(dtype),
        (node_count, node_count),
    )
    return adjacency.coalesce()


@dataclass
class GraphBatch:
    """
    Block-diagonal batch of one or more graphs.

    Attributes:
        features: (N, F) node features
        adjacency: (N, N) sparse normalized adjacency
        graph_index: (N,) graph id of each node, sorted ascending
        num_graphs: Number of graphs in the batch
        node_labels: (N,) node labels when every graph has them
        graph_labels: (num_graphs,) graph labels when every graph has one
    """
    features: torch.Tensor
    adjacency: torch.Tensor
    graph_index: torch.Tensor
    num_graphs: int
    node_labels: Optional[torch.Tensor] = None
    graph_labels: Optional[torch.Tensor] = None

    @property
    def node_count(self) -> int:
        return int(self.features.shape[0])

    @classmethod
    def from_graphs(cls, graphs: Sequence[Graph], dtype: Optional[torch.dtype] = None) -> "GraphBatch":
        if not graphs:
            raise DatasetError("cannot batch an empty list of graphs")
        dtype = dtype or get_policy().dtype
        offsets = np.cumsum([0] + [g.node_count for g in graphs])
        edges = np.concatenate([g.edges + offsets[i] for i, g in enumerate(graphs)], axis=0)
        features = np.concatenate([g.features for g in graphs], axis=0)
        graph_index = np.repeat(np.arange(len(graphs), dtype=np.int64), [g.node_count for g in graphs])

        node_labels = None
        if all(g.node_labels is not None for g in graphs):
            node_labels = torch.from_numpy(np.concatenate([g.node_labels for g in graphs]))
        graph_labels = None
        if all(g.label is not None for g in graphs):
            graph_labels = torch.tensor([g.label for g in graphs], dtype=torch.int64)

        return cls(
            features=torch.from_numpy(features).to(dtype),
            adjacency=normalized_adjacency(edges, int(offsets[-1]), dtype),
            graph_index=torch.from_numpy(graph_index),
            num_graphs=len(graphs),
            node_labels=node_labels,
            graph_labels=graph_labels,
        )
