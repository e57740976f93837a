"""
Shared fixtures for the PR-CapsNet test suite.

Educational Note:
Fixtures defined here are visible to every test module. Randomized
tests draw from seeded numpy generators so a failure is reproducible
from the test name alone.
"""

import logging

import numpy as np
import pytest
import torch

from src.data.dataset import Graph, GraphDataset, Task
from src.geometry.manifold import PseudoHyperboloid
from src.geometry.types import Signature
from src.models.config import ModelConfig
from src.routing.config import RoutingConfig
from src.utils.logging_config import PerformanceLogger


def random_tangents(manifold: PseudoHyperboloid, count: int, rng: np.random.Generator, scale: float = 1.0) -> torch.Tensor:
    """Tangent vectors at the origin (pole coordinate zero), (count, D)."""
    reduced = scale * rng.standard_normal((count, manifold.dim - 1))
    tangent = np.concatenate([np.zeros((count, 1)), reduced], axis=1)
    return torch.from_numpy(tangent)


def random_points(manifold: PseudoHyperboloid, count: int, rng: np.random.Generator, scale: float = 1.0) -> torch.Tensor:
    """Points on the manifold away from the cut locus, (count, D)."""
    return manifold.exp_o(random_tangents(manifold, count, rng, scale))


@pytest.fixture
def rng():
    """Seeded numpy generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def signature():
    return Signature(s=3, t=2)


@pytest.fixture
def manifold(signature):
    """Small pseudo-hyperboloid used across geometry and routing tests."""
    return PseudoHyperboloid(signature, -1.0)


@pytest.fixture
def six_node_dataset():
    """
    Six-node node-classification fixture: a triangle and a path joined by one edge.

    Labels: triangle nodes 0, path nodes 1. Every split has both classes.
    """
    edges = [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5)]
    features = np.eye(6, 4) + 0.1 * np.arange(24, dtype=np.float64).reshape(6, 4) / 24.0
    labels = np.array([0, 0, 0, 1, 1, 1])
    graph = Graph.from_raw(6, edges, features, node_labels=labels)
    return GraphDataset(
        task=Task.NODE,
        graphs=[graph],
        num_classes=2,
        train_mask=np.array([True, True, False, True, True, False]),
        val_mask=np.array([False, False, True, False, False, False]),
        test_mask=np.array([False, False, False, False, False, True]),
        name="six-node",
    ).validate()


@pytest.fixture
def tiny_graph_dataset():
    """Eight small graphs (triangles labelled 1, paths labelled 0) for the graph task."""
    graphs = []
    for i in range(8):
        if i % 2:
            graphs.append(Graph.from_raw(3, [(0, 1), (1, 2), (0, 2)], np.ones((3, 2)), label=1))
        else:
            graphs.append(Graph.from_raw(4, [(0, 1), (1, 2), (2, 3)], np.ones((4, 2)), label=0))
    split = np.array(["train"] * 4 + ["val"] * 2 + ["test"] * 2)
    return GraphDataset(
        task=Task.GRAPH,
        graphs=graphs,
        num_classes=2,
        train_mask=split == "train",
        val_mask=split == "val",
        test_mask=split == "test",
        name="tiny-graphs",
    ).validate()


@pytest.fixture
def small_routing():
    return RoutingConfig(iterations=2, num_perspectives=2, align_dim=4, context_dim=4)


@pytest.fixture
def small_model_config(small_routing):
    """A model small enough to train for a few epochs inside a unit test."""
    return ModelConfig(
        encoder_dim=8,
        capsule_layers=2,
        s=2,
        t=2,
        primary_capsules=3,
        hidden_capsules=3,
        dropout=0.0,
        routing=small_routing,
    )


@pytest.fixture(autouse=True)
def restore_root_logging():
    """CLI commands reconfigure the root logger; put it back after each test."""
    root = logging.getLogger()
    performance = logging.getLogger(PerformanceLogger.LOGGER_NAME)
    handlers, level = list(root.handlers), root.level
    yield
    for handler in list(performance.handlers):
        handler.close()
        performance.removeHandler(handler)
    performance.propagate = True
    for handler in list(root.handlers):
        if handler not in handlers:
            handler.close()
    root.handlers[:] = handlers
    root.setLevel(level)
