"""
Dataset file formats: readers and writers.

Three on-disk layouts are supported (grammars in docs/file_formats.md):

- Node dataset directory: edges.tsv, features.csv, labels.csv, splits.csv
- Graph dataset as JSON lines, one graph record per line
- TU benchmark layout: DS_A.txt, DS_graph_indicator.txt,
  DS_graph_labels.txt and optional DS_node_labels.txt / DS_node_attributes.txt

Every table is read with pandas; lines starting with '#' are comments.
Floats are written with 17 significant digits and read back with the
round-trip parser, so save-then-load reproduces arrays exactly.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.utils.errors import (
    DatasetError,
    EdgeRangeError,
    LabelRangeError,
    MalformedRecordError,
    MissingFileError,
    OverlappingMasksError,
    RaggedRowsError,
)
from src.utils.seeding import numpy_rng
from .dataset import SPLITS, Graph, GraphDataset, Task, stratified_split

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

NODE_FILES = ("edges.tsv", "features.csv", "labels.csv", "splits.csv")
FLOAT_FORMAT = "%.17g"
GRAPH_SPLIT_FRACTIONS = (0.8, 0.1, 0.1)


# ============================================================================
# Table Reading
# ============================================================================

def _read_table(path: Path, sep: str, dtype=None) -> pd.DataFrame:
    """Read a header-less table, rejecting ragged rows."""
    if not path.exists():
        raise MissingFileError(f"required file not found: {path}")
    try:
        frame = pd.read_csv(
            path,
            sep=sep,
            header=None,
            comment="#",
            skip_blank_lines=True,
            skipinitialspace=True,
            dtype=dtype,
            float_precision="round_trip",
        )
    except pd.errors.EmptyDataError:
        return pd.DataFrame()
    except pd.errors.ParserError as e:
        raise RaggedRowsError(f"{path.name}: {e}") from e
    except ValueError as e:
        raise DatasetError(f"{path.name}: {e}") from e
    if frame.isna().any().any():
        row = int(np.flatnonzero(frame.isna().any(axis=1).to_numpy())[0])
        raise RaggedRowsError(f"{path.name}: row {row} has missing values")
    return frame


def _as_int_array(frame: pd.DataFrame, name: str) -> np.ndarray:
    values = frame.to_numpy()
    if values.size == 0:
        return values.astype(np.int64)
    try:
        as_float = values.astype(np.float64)
    except ValueError as e:
        raise DatasetError(f"{name}: non-numeric entry ({e})") from e
    if not np.equal(np.mod(as_float, 1), 0).all():
        raise DatasetError(f"{name}: expected integers")
    return as_float.astype(np.int64)


# ============================================================================
# Node Datasets
# ============================================================================

def _read_splits(path: Path, node_count: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Read splits.csv.

    One column: the split of node i on row i (every node listed).
    Two columns: node_id,split pairs (unlisted nodes are in no split).
    """
    frame = _read_table(path, sep=",", dtype=str)
    masks = {split: np.zeros(node_count, dtype=bool) for split in SPLITS}
    if frame.shape[1] == 1:
        if frame.shape[0] != node_count:
            raise RaggedRowsError(f"{path.name}: {frame.shape[0]} rows for {node_count} nodes")
        node_ids = np.arange(node_count)
        names = frame[0].str.strip().to_numpy()
    elif frame.shape[1] == 2:
        node_ids = _as_int_array(frame[[0]], path.name)[:, 0]
        names = frame[1].str.strip().to_numpy()
        if node_ids.size and (node_ids.min() < 0 or node_ids.max() >= node_count):
            raise DatasetError(f"{path.name}: node id outside [0, {node_count})")
    else:
        raise RaggedRowsError(f"{path.name}: expected 1 or 2 columns, got {frame.shape[1]}")

    for row, (node, name) in enumerate(zip(node_ids, names)):
        if name not in masks:
            raise DatasetError(f"{path.name}: row {row} has unknown split '{name}'")
        if any(masks[other][node] for other in SPLITS if other != name):
            raise OverlappingMasksError(f"{path.name}: node {node} is assigned to more than one split")
        masks[name][node] = True
    return masks["train"], masks["val"], masks["test"]


def load_node_dataset(dir_path: PathLike) -> GraphDataset:
    """
    Load a node-classification dataset directory.

    Raises:
        MissingFileError, RaggedRowsError, LabelRangeError,
        OverlappingMasksError, EdgeRangeError
    """
    root = Path(dir_path)
    if not root.is_dir():
        raise MissingFileError(f"dataset directory not found: {root}")
    for name in NODE_FILES:
        if not (root / name).exists():
            raise MissingFileError(f"required file not found: {root / name}")

    features_frame = _read_table(root / "features.csv", sep=",")
    if features_frame.empty:
        raise DatasetError("features.csv: no rows")
    try:
        features = features_frame.to_numpy(dtype=np.float64)
    except ValueError as e:
        raise DatasetError(f"features.csv: non-numeric entry ({e})") from e
    node_count = features.shape[0]

    edge_frame = _read_table(root / "edges.tsv", sep="\t")
    if not edge_frame.empty and edge_frame.shape[1] != 2:
        raise RaggedRowsError(f"edges.tsv: expected 2 columns, got {edge_frame.shape[1]}")
    raw_edges = _as_int_array(edge_frame, "edges.tsv").reshape(-1, 2)

    label_frame = _read_table(root / "labels.csv", sep=",")
    if label_frame.shape[1] != 1:
        raise RaggedRowsError(f"labels.csv: expected 1 column, got {label_frame.shape[1]}")
    labels = _as_int_array(label_frame, "labels.csv")[:, 0]
    if labels.shape[0] != node_count:
        raise RaggedRowsError(f"labels.csv: {labels.shape[0]} rows for {node_count} nodes")
    if labels.size and labels.min() < 0:
        raise LabelRangeError(f"labels.csv: label {int(labels.min())} is negative")

    train, val, test = _read_splits(root / "splits.csv", node_count)
    graph = Graph.from_raw(node_count, raw_edges, features, node_labels=labels)
    dataset = GraphDataset(
        task=Task.NODE,
        graphs=[graph],
        num_classes=int(labels.max()) + 1,
        train_mask=train,
        val_mask=val,
        test_mask=test,
        name=root.name,
    )
    logger.info(
        "Loaded node dataset %s: %d nodes, %d edges, %d classes",
        root.name, node_count, graph.edge_count, dataset.num_classes
    )
    return dataset.validate()


def save_node_dataset(dataset: GraphDataset, dir_path: PathLike) -> Path:
    """Write a node dataset in the directory layout read by load_node_dataset."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    graph = dataset.graph

    pd.DataFrame(graph.edges).to_csv(root / "edges.tsv", sep="\t", header=False, index=False)
    pd.DataFrame(graph.features).to_csv(root / "features.csv", header=False, index=False, float_format=FLOAT_FORMAT)
    pd.DataFrame(graph.node_labels).to_csv(root / "labels.csv", header=False, index=False)

    names = np.full(graph.node_count, "", dtype=object)
    for split in SPLITS:
        names[dataset.mask(split)] = split
    if (names == "").any():
        ids = np.flatnonzero(names != "")
        pd.DataFrame({"node": ids, "split": names[ids]}).to_csv(root / "splits.csv", header=False, index=False)
    else:
        pd.DataFrame(names).to_csv(root / "splits.csv", header=False, index=False)
    return root


# ============================================================================
# Graph Datasets (JSON lines)
# ============================================================================

def _parse_graph_record(record: Dict, line_number: int) -> Tuple[Graph, Optional[str]]:
    if not isinstance(record, dict):
        raise MalformedRecordError("record is not a JSON object", line_number)
    missing = [key for key in ("node_count", "edges", "features", "label") if key not in record]
    if missing:
        raise MalformedRecordError(f"missing field(s) {missing}", line_number)
    node_count = record["node_count"]
    if not isinstance(node_count, int) or isinstance(node_count, bool) or node_count < 1:
        raise MalformedRecordError(f"node_count must be a positive integer, got {node_count!r}", line_number)
    label = record["label"]
    if not isinstance(label, int) or isinstance(label, bool):
        raise MalformedRecordError(f"label must be an integer, got {label!r}", line_number)

    try:
        edges = np.asarray(record["edges"], dtype=np.int64).reshape(-1, 2)
        features = np.asarray(record["features"], dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise MalformedRecordError(f"bad edges or features ({e})", line_number) from e
    if features.ndim != 2 or features.shape[0] != node_count:
        raise MalformedRecordError(
            f"features must be {node_count} rows of equal length, got shape {features.shape}", line_number
        )
    try:
        graph = Graph.from_raw(node_count, edges, features, label=label)
    except EdgeRangeError as e:
        raise EdgeRangeError(f"line {line_number}: {e}") from e

    split = record.get("split")
    if split is not None and split not in SPLITS:
        raise MalformedRecordError(f"unknown split '{split}'", line_number)
    return graph, split


def load_graph_dataset(path: PathLike, seed: int = 0) -> GraphDataset:
    """
    Load a graph-classification dataset.

    A directory is read with the TU adapter; a file is read as JSON lines.
    Records without a "split" field get a stratified 80/10/10 split drawn
    from `seed`.

    Raises:
        MalformedRecordError: with the offending line number
    """
    path = Path(path)
    if path.is_dir():
        return load_tu_dataset(path, seed=seed)
    if not path.exists():
        raise MissingFileError(f"graph dataset not found: {path}")

    graphs: List[Graph] = []
    splits: List[Optional[str]] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                record = json.loads(stripped)
            except json.JSONDecodeError as e:
                raise MalformedRecordError(f"invalid JSON ({e.msg})", line_number) from e
            graph, split = _parse_graph_record(record, line_number)
            graphs.append(graph)
            splits.append(split)

    if not graphs:
        raise DatasetError(f"{path.name}: no graph records")
    widths = {g.features.shape[1] for g in graphs}
    if len(widths) != 1:
        raise RaggedRowsError(f"{path.name}: graphs disagree on feature width {sorted(widths)}")

    labels = np.asarray([g.label for g in graphs], dtype=np.int64)
    if labels.min() < 0:
        raise LabelRangeError(f"{path.name}: label {int(labels.min())} is negative")

    given = [s is not None for s in splits]
    if all(given):
        names = np.asarray(splits)
        train, val, test = (names == s for s in SPLITS)
    elif not any(given):
        train, val, test = stratified_split(labels, GRAPH_SPLIT_FRACTIONS, numpy_rng(seed, "data"))
    else:
        raise MalformedRecordError("either every record or no record may carry a split")

    dataset = GraphDataset(
        task=Task.GRAPH,
        graphs=graphs,
        num_classes=int(labels.max()) + 1,
        train_mask=train,
        val_mask=val,
        test_mask=test,
        name=path.stem,
    )
    logger.info("Loaded %d graphs from %s (%d classes)", len(graphs), path.name, dataset.num_classes)
    return dataset.validate()


def save_graph_dataset(dataset: GraphDataset, path: PathLike) -> Path:
    """Write a graph dataset as JSON lines (splits included)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = np.full(len(dataset.graphs), None, dtype=object)
    for split in SPLITS:
        names[dataset.mask(split)] = split
    with open(path, "w", encoding="utf-8") as f:
        for graph, split in zip(dataset.graphs, names):
            record = {
                "node_count": graph.node_count,
                "edges": graph.edges.tolist(),
                "features": graph.features.tolist(),
                "label": int(graph.label),
            }
            if split is not None:
                record["split"] = split
            f.write(json.dumps(record) + "\n")
    return path


# ============================================================================
# TU Adapter
# ============================================================================

def _tu_prefix(root: Path) -> str:
    candidates = sorted(root.glob("*_A.txt"))
    if not candidates:
        raise MissingFileError(f"no *_A.txt file in {root}")
    return candidates[0].name[:-len("_A.txt")]


def load_tu_dataset(dir_path: PathLike, name: Optional[str] = None, seed: int = 0) -> GraphDataset:
    """
    Read the TU benchmark multi-file layout.

    Node and graph ids in the files are 1-based. Graph labels are remapped
    to 0..C-1 in sorted order. Node features are the one-hot node labels
    and/or the node attributes; a constant 1 feature is used when neither
    file exists.
    """
    root = Path(dir_path)
    prefix = name or _tu_prefix(root)

    def table(suffix: str, required: bool = True, dtype=None) -> Optional[pd.DataFrame]:
        path = root / f"{prefix}_{suffix}.txt"
        if not path.exists():
            if required:
                raise MissingFileError(f"required file not found: {path}")
            return None
        return _read_table(path, sep=",", dtype=dtype)

    adjacency = _as_int_array(table("A"), f"{prefix}_A.txt").reshape(-1, 2) - 1
    indicator = _as_int_array(table("graph_indicator"), f"{prefix}_graph_indicator.txt")[:, 0] - 1
    raw_labels = _as_int_array(table("graph_labels"), f"{prefix}_graph_labels.txt")[:, 0]

    num_graphs = raw_labels.shape[0]
    node_total = indicator.shape[0]
    if indicator.min() < 0 or indicator.max() >= num_graphs:
        raise DatasetError(f"{prefix}_graph_indicator.txt: graph id outside [1, {num_graphs}]")
    if (np.diff(indicator) < 0).any():
        raise DatasetError(f"{prefix}_graph_indicator.txt: nodes are not grouped by graph")
    if adjacency.size and (adjacency.min() < 0 or adjacency.max() >= node_total):
        raise EdgeRangeError(f"{prefix}_A.txt: node id outside [1, {node_total}]")

    blocks = []
    node_label_frame = table("node_labels", required=False)
    if node_label_frame is not None:
        node_labels = _as_int_array(node_label_frame, f"{prefix}_node_labels.txt")[:, 0]
        values, inverse = np.unique(node_labels, return_inverse=True)
        blocks.append(np.eye(values.size, dtype=np.float64)[inverse])
    attribute_frame = table("node_attributes", required=False)
    if attribute_frame is not None:
        blocks.append(attribute_frame.to_numpy(dtype=np.float64))
    for block in blocks:
        if block.shape[0] != node_total:
            raise RaggedRowsError(f"{prefix}: node feature rows ({block.shape[0]}) != nodes ({node_total})")
    features = np.concatenate(blocks, axis=1) if blocks else np.ones((node_total, 1), dtype=np.float64)

    classes, labels = np.unique(raw_labels, return_inverse=True)
    counts = np.bincount(indicator, minlength=num_graphs)
    if (counts == 0).any():
        raise DatasetError(f"{prefix}: graph {int(np.flatnonzero(counts == 0)[0]) + 1} has no nodes")
    offsets = np.concatenate([[0], np.cumsum(counts)])

    edge_graph = indicator[adjacency[:, 0]] if adjacency.size else np.zeros(0, dtype=np.int64)
    if adjacency.size and (indicator[adjacency[:, 1]] != edge_graph).any():
        raise EdgeRangeError(f"{prefix}_A.txt: edge joins nodes of different graphs")

    graphs = []
    for g in range(num_graphs):
        local = adjacency[edge_graph == g] - offsets[g]
        graphs.append(Graph.from_raw(
            int(counts[g]), local, features[offsets[g]:offsets[g + 1]], label=int(labels[g])
        ))

    train, val, test = stratified_split(labels, GRAPH_SPLIT_FRACTIONS, numpy_rng(seed, "data"))
    dataset = GraphDataset(
        task=Task.GRAPH,
        graphs=graphs,
        num_classes=int(classes.size),
        train_mask=train,
        val_mask=val,
        test_mask=test,
        name=prefix,
        metadata={"original_labels": classes.tolist()},
    )
    logger.info("Loaded TU dataset %s: %d graphs, %d classes", prefix, num_graphs, classes.size)
    return dataset.validate()
