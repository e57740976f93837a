"""
Synthetic mixed-geometry graphs for desk-scale experiments.

Three families, all node-classification datasets built with networkx:

- TREE: a balanced tree; a node's label is the parity of its depth.
- CYCLE_CLIQUE: a chain of cycle and clique units joined by single
  bridge edges; a node's label is the kind of unit it sits in.
- MIXED: a balanced backbone tree whose leaves are replaced, in turn, by
  a small sub-tree, a cycle or a clique hung from the leaf's parent.
  Labels are hierarchy (backbone and sub-tree nodes), cycle and clique.

Educational Note:
Trees are the textbook negatively curved graphs and cliques the
positively curved ones, so MIXED puts both kinds of local geometry into
a single graph. Node features deliberately carry little more than the
node degree; a model has to use the graph structure to do well.
"""

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict, List, Tuple

import networkx as nx
import numpy as np

from src.utils.errors import SyntheticSpecError
from src.utils.seeding import numpy_rng
from .dataset import Graph, GraphDataset, Task, stratified_split

logger = logging.getLogger(__name__)

SYNTHETIC_SPLIT_FRACTIONS = (0.6, 0.2, 0.2)


class SyntheticFamily(str, Enum):
    """Graph family produced by generate_synthetic."""
    TREE = "tree"
    CYCLE_CLIQUE = "cycle_clique"
    MIXED = "mixed"


class MotifLabel(int, Enum):
    """Node labels of the MIXED family."""
    HIERARCHY = 0
    CYCLE = 1
    CLIQUE = 2


@dataclass(frozen=True)
class SyntheticSpec:
    """
    Parameters of a synthetic graph.

    Attributes:
        family: Which generator to use
        depth: Backbone tree depth (TREE and MIXED)
        branching: Backbone branching factor (TREE and MIXED)
        clique_size: Nodes per clique unit
        cycle_length: Nodes per cycle unit
        motif_count: Cycle/clique pairs in the CYCLE_CLIQUE chain
        motif_depth: Depth of the sub-trees hung in MIXED
        motif_branching: Branching of the sub-trees hung in MIXED
        noise: Standard deviation of Gaussian feature noise, in [0, 1)
        max_degree: Degrees above this share the last one-hot slot
        seed: Seed for noise and splits
    """
    family: SyntheticFamily = SyntheticFamily.MIXED
    depth: int = 3
    branching: int = 3
    clique_size: int = 8
    cycle_length: int = 8
    motif_count: int = 1
    motif_depth: int = 2
    motif_branching: int = 2
    noise: float = 0.1
    max_degree: int = 10
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", SyntheticFamily(self.family))

    def validate(self) -> "SyntheticSpec":
        """Raise SyntheticSpecError naming the first bad field."""
        if not 0.0 <= self.noise < 1.0:
            raise SyntheticSpecError(f"noise must be in [0, 1), got {self.noise}")
        minimums = {
            "depth": 0,
            "branching": 1,
            "clique_size": 3,
            "cycle_length": 3,
            "motif_count": 1,
            "motif_depth": 0,
            "motif_branching": 1,
            "max_degree": 1,
        }
        for name, minimum in minimums.items():
            value = getattr(self, name)
            if not isinstance(value, int) or value < minimum:
                raise SyntheticSpecError(f"{name} must be an integer >= {minimum}, got {value!r}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["family"] = self.family.value
        return data


# ============================================================================
# Family Builders
# ============================================================================

def _attach(graph: nx.Graph, motif: nx.Graph, anchor=None) -> List[int]:
    """
    Copy `motif` into `graph` under fresh consecutive ids.

    When `anchor` is given, a bridge edge joins it to the motif's first node.
    Returns the new node ids in motif order.
    """
    start = graph.number_of_nodes()
    mapping = {node: start + i for i, node in enumerate(sorted(motif.nodes))}
    graph.add_nodes_from(mapping.values())
    graph.add_edges_from((mapping[u], mapping[v]) for u, v in motif.edges)
    if anchor is not None:
        graph.add_edge(anchor, start)
    return list(mapping.values())


def _tree(spec: SyntheticSpec) -> Tuple[nx.Graph, np.ndarray]:
    graph = nx.balanced_tree(spec.branching, spec.depth)
    depth = nx.single_source_shortest_path_length(graph, 0)
    labels = np.asarray([depth[node] % 2 for node in range(graph.number_of_nodes())], dtype=np.int64)
    return graph, labels


def _cycle_clique(spec: SyntheticSpec) -> Tuple[nx.Graph, np.ndarray]:
    graph = nx.Graph()
    labels: List[int] = []
    previous_last = None
    for _ in range(spec.motif_count):
        for label, motif in ((0, nx.cycle_graph(spec.cycle_length)), (1, nx.complete_graph(spec.clique_size))):
            nodes = _attach(graph, motif, anchor=previous_last)
            labels.extend([label] * len(nodes))
            previous_last = nodes[-1]
    return graph, np.asarray(labels, dtype=np.int64)


def _mixed(spec: SyntheticSpec) -> Tuple[nx.Graph, np.ndarray]:
    if spec.depth < 1:
        raise SyntheticSpecError("MIXED needs depth >= 1 so leaves have a parent")
    backbone = nx.balanced_tree(spec.branching, spec.depth)
    depth = nx.single_source_shortest_path_length(backbone, 0)
    parent = {child: node for node, child in nx.bfs_edges(backbone, 0)}
    internal = [node for node in sorted(backbone.nodes) if depth[node] < spec.depth]
    leaves = [node for node in sorted(backbone.nodes) if depth[node] == spec.depth]

    kept = set(internal)
    graph = nx.Graph()
    graph.add_nodes_from(range(len(internal)))
    graph.add_edges_from((u, v) for u, v in backbone.edges if u in kept and v in kept)
    labels: List[int] = [MotifLabel.HIERARCHY] * len(internal)

    motifs = (
        (MotifLabel.HIERARCHY, nx.balanced_tree(spec.motif_branching, spec.motif_depth)),
        (MotifLabel.CYCLE, nx.cycle_graph(spec.cycle_length)),
        (MotifLabel.CLIQUE, nx.complete_graph(spec.clique_size)),
    )
    for i, leaf in enumerate(leaves):
        label, motif = motifs[i % len(motifs)]
        nodes = _attach(graph, motif, anchor=parent[leaf])
        labels.extend([label] * len(nodes))
    return graph, np.asarray(labels, dtype=np.int64)


_BUILDERS = {
    SyntheticFamily.TREE: _tree,
    SyntheticFamily.CYCLE_CLIQUE: _cycle_clique,
    SyntheticFamily.MIXED: _mixed,
}


# ============================================================================
# Features and Dataset Assembly
# ============================================================================

def degree_features(graph: nx.Graph, max_degree: int, noise: float, rng: np.random.Generator) -> np.ndarray:
    """One-hot of min(degree, max_degree) plus noise * N(0, 1)."""
    n = graph.number_of_nodes()
    degree = np.asarray([graph.degree[node] for node in range(n)], dtype=np.int64)
    features = np.eye(max_degree + 1, dtype=np.float64)[np.minimum(degree, max_degree)]
    if noise > 0:
        features = features + noise * rng.standard_normal(features.shape)
    return features


def generate_synthetic(spec: SyntheticSpec) -> GraphDataset:
    """
    Build a node-classification dataset from a SyntheticSpec.

    The graph and labels depend only on the size parameters; the feature
    noise and the stratified 60/20/20 split are drawn from the "data"
    stream of `spec.seed`.

    Raises:
        SyntheticSpecError: invalid parameters or fewer than 2 classes
    """
    spec.validate()
    graph, labels = _BUILDERS[spec.family](spec)
    num_classes = int(np.unique(labels).size)
    if num_classes < 2:
        raise SyntheticSpecError(
            f"{spec.family.value} with these parameters yields {num_classes} class(es); at least 2 are needed"
        )

    rng = numpy_rng(spec.seed, "data")
    features = degree_features(graph, spec.max_degree, spec.noise, rng)
    train, val, test = stratified_split(labels, SYNTHETIC_SPLIT_FRACTIONS, rng)

    edges = np.asarray(list(graph.edges), dtype=np.int64).reshape(-1, 2)
    dataset = GraphDataset(
        task=Task.NODE,
        graphs=[Graph.from_raw(graph.number_of_nodes(), edges, features, node_labels=labels)],
        num_classes=int(labels.max()) + 1,
        train_mask=train,
        val_mask=val,
        test_mask=test,
        name=f"synthetic-{spec.family.value}",
        metadata={"synthetic": spec.to_dict()},
    )
    logger.debug("Generated %s: %s", dataset.name, dataset.summary())
    return dataset.validate()
