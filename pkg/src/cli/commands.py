"""
CLI command implementations.

Each cmd_* function takes resolved settings, does its work and returns
an exit code of 0. Failures are raised as PRCapsError subclasses; main()
is the only place that turns them into exit codes and stderr messages.

Output directory artifacts:
    report.csv            per-epoch metrics (train)
    best.ckpt             best-validation checkpoint (train)
    resolved_config.yaml  configuration snapshot (train, ablate)
    summary.csv           mean and std per grid cell (ablate)
    cells/                per-cell, per-seed reports (ablate)
    run.log, errors.log, performance.log
"""

import copy
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import torch

from src.data.batching import GraphBatch
from src.data.dataset import GraphDataset, Task, normalize_features
from src.data.loaders import FLOAT_FORMAT, NODE_FILES, load_graph_dataset, load_node_dataset, save_node_dataset
from src.data.synthetic import SyntheticSpec, generate_synthetic
from src.models.checkpoint import load_checkpoint
from src.training.trainer import CHECKPOINT_NAME, evaluate, train
from src.utils.errors import ConfigError, OutputExistsError
from src.utils.logging_config import LogConfig, StructuredLogger, log_performance, setup_logging
from .config import (
    RESOLVED_CONFIG_NAME,
    AblationGrid,
    DataSection,
    RunConfig,
    build_run_config,
    parse_dims,
    thread_cap,
    write_resolved_config,
)

logger = logging.getLogger(__name__)
event_logger = StructuredLogger()

REPORT_NAME = "report.csv"
SUMMARY_NAME = "summary.csv"
EMBEDDINGS_NAME = "embeddings.csv"
CELLS_DIR = "cells"

ARTIFACTS = (
    REPORT_NAME, CHECKPOINT_NAME, RESOLVED_CONFIG_NAME, SUMMARY_NAME, EMBEDDINGS_NAME,
) + NODE_FILES
LOG_FILES = (LogConfig.RUN_LOG_FILE, LogConfig.ERROR_LOG_FILE, LogConfig.PERFORMANCE_LOG_FILE)

SUMMARY_COLUMNS = ["cell", "routing", "classifier", "seeds", "mean", "std", "min", "max", "mean_val"]


# ============================================================================
# Shared Helpers
# ============================================================================

def prepare_output_dir(out: Union[str, Path], overwrite: bool = False) -> Path:
    """
    Create the output directory, refusing to reuse a non-empty one.

    With overwrite, the artifacts a previous command wrote are removed
    first so the directory ends up holding only this run's files.

    Raises:
        OutputExistsError: the directory is non-empty and overwrite is off
    """
    out = Path(out)
    if out.exists() and not out.is_dir():
        raise OutputExistsError(f"output path {out} exists and is not a directory")
    if out.exists() and any(out.iterdir()):
        if not overwrite:
            raise OutputExistsError(f"output directory {out} is not empty (pass --overwrite to reuse it)")
        for entry in out.iterdir():
            if entry.name == CELLS_DIR and entry.is_dir():
                shutil.rmtree(entry)
            elif entry.is_file() and (entry.name in ARTIFACTS or entry.name.startswith(LOG_FILES)):
                entry.unlink()
        logger.info("Reusing output directory %s", out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_dataset(data: DataSection, seed: int = 0) -> GraphDataset:
    """
    Load (or generate) the dataset a DataSection describes.

    A directory holding edges.tsv is a node dataset; any other directory
    is read with the TU adapter; a file is read as JSON-lines graph
    records. Graph datasets without shipped splits are split with `seed`.

    Raises:
        ConfigError: no source configured or the data disagrees with data.task
    """
    if data.synthetic is not None:
        dataset = generate_synthetic(data.synthetic.to_spec())
    elif data.path is None:
        raise ConfigError("data.path is required (or configure data.synthetic)")
    else:
        path = Path(data.path)
        if path.is_dir() and (path / NODE_FILES[0]).exists():
            dataset = load_node_dataset(path)
        else:
            dataset = load_graph_dataset(path, seed=seed)

    if dataset.task != data.task:
        raise ConfigError(
            f"data.task is '{data.task.value}' but {dataset.name or data.path} is a {dataset.task.value}-task dataset"
        )
    if data.normalize_features:
        dataset = normalize_features(dataset)
    logger.info("Dataset %s: %s", dataset.name, dataset.summary())
    return dataset


def _apply_threads() -> Optional[int]:
    cap = thread_cap()
    if cap is not None:
        torch.set_num_threads(cap)
    return cap


def _start_run_logging(config: RunConfig, out: Path) -> None:
    setup_logging(config.run.log_level, log_dir=out)


# ============================================================================
# train / eval
# ============================================================================

@log_performance("cmd_train")
def cmd_train(config: RunConfig) -> int:
    """Train one model; writes report.csv, best.ckpt and resolved_config.yaml."""
    config.require_dataset()
    out = prepare_output_dir(config.run.out, config.run.overwrite)
    _start_run_logging(config, out)
    _apply_threads()

    dataset = load_dataset(config.data, config.run.seed)
    write_resolved_config(config, out)
    result = train(dataset, config.model_settings(), config.training, seed=config.run.seed, out_dir=out)
    result.report.to_csv(out / REPORT_NAME)

    final = result.report.final
    print(
        f"epochs {final.epoch} loss {final.loss:.4f} train {final.train_acc:.4f} "
        f"val {final.val_acc:.4f} test {final.test_acc:.4f} "
        f"best_epoch {result.report.best_epoch} params {result.report.parameter_count}"
    )
    return 0


@log_performance("cmd_eval")
def cmd_eval(config: RunConfig, checkpoint: Union[str, Path], split: str = "test") -> int:
    """Score a checkpoint on one split of the configured dataset."""
    config.require_dataset()
    _apply_threads()
    dataset = load_dataset(config.data, config.run.seed)
    accuracy = evaluate(checkpoint, dataset, split)
    print(f"{split} accuracy {accuracy:.4f}")
    return 0


# ============================================================================
# ablate
# ============================================================================

def _merge(base: Dict[str, Any], patch: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in patch.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _variant(routing: str, classifier: str) -> Dict[str, Any]:
    if routing == "none":
        return {"model": {"capsules": False, "classifier": classifier}}
    return {"model": {"capsules": True, "classifier": classifier}, "routing": {"mode": routing}}


def ablation_cells(grid: AblationGrid, values: Optional[List[Any]] = None) -> List[Tuple[str, Dict[str, Any]]]:
    """
    (label, config patch) for every cell of a grid.

    Patches are merged over the base config; cells of the K, T, dims,
    gating and curvature grids keep the base routing and classifier.
    """
    grid = AblationGrid(grid)
    if grid == AblationGrid.ROUTING_CLASSIFIER:
        return [
            (f"{routing}+{classifier}", _variant(routing, classifier))
            for routing in ("euclidean", "pcr", "acr")
            for classifier in ("linear", "prcc")
        ]
    if grid == AblationGrid.COMPONENTS:
        pairs = [("none", "linear"), ("none", "prcc"), ("euclidean", "linear"), ("acr", "prcc")]
        return [(f"{r}+{c}", _variant(r, c)) for r, c in pairs]
    if grid == AblationGrid.K:
        return [(f"K={int(k)}", {"routing": {"mode": "acr", "num_perspectives": int(k)}}) for k in values or [1, 2, 4, 8]]
    if grid == AblationGrid.T:
        return [(f"T={int(t)}", {"routing": {"iterations": int(t)}}) for t in values or [1, 2, 3, 4, 5]]
    if grid == AblationGrid.DIMS:
        cells = []
        for value in values or ["3,3", "6,6", "9,9", "12,12"]:
            s, t = parse_dims(value)
            cells.append((f"s={s},t={t}", {"model": {"s": s, "t": t}}))
        return cells
    if grid == AblationGrid.GATING:
        terms = ["curvature", "alignment", "consistency"]
        cells = [("full", {"routing": {"mode": "acr", "gate": "full", "gate_terms": terms}})]
        for removed in terms:
            kept = [t for t in terms if t != removed]
            cells.append((f"no_{removed}", {"routing": {"mode": "acr", "gate": "full", "gate_terms": kept}}))
        cells.append(("simple", {"routing": {"mode": "acr", "gate": "simple"}}))
        return cells
    return [
        ("adaptive", {"routing": {"mode": "acr", "learn_curvature": True}}),
        ("fixed", {"routing": {"mode": "acr", "learn_curvature": False}}),
    ]


def _run_cell(
    label: str,
    config_data: Dict[str, Any],
    seed: int,
    dataset: GraphDataset,
    cells_dir: Optional[str],
) -> Dict[str, Any]:
    """Train one (cell, seed); top-level so worker processes can unpickle it."""
    config = build_run_config(config_data)
    result = train(dataset, config.model_settings(), config.training, seed=seed)
    if cells_dir is not None:
        safe = label.replace("+", "_").replace("=", "").replace(",", "_")
        result.report.to_csv(Path(cells_dir) / f"{safe}_seed{seed}.csv")
    best = result.report.best_row
    return {
        "cell": label,
        "routing": config.model_settings().routing_mode,
        "classifier": config.model.classifier.value,
        "seed": seed,
        "test_acc": best.test_acc,
        "val_acc": best.val_acc,
        "best_epoch": result.report.best_epoch,
    }


def summarize_ablation(rows: List[Dict[str, Any]], cell_order: List[str]) -> pd.DataFrame:
    """Mean, sample std, min and max test accuracy per cell, in grid order."""
    frame = pd.DataFrame(rows)
    grouped = frame.groupby("cell", sort=False)
    summary = pd.DataFrame({
        "routing": grouped["routing"].first(),
        "classifier": grouped["classifier"].first(),
        "seeds": grouped["seed"].count(),
        "mean": grouped["test_acc"].mean(),
        "std": grouped["test_acc"].std().fillna(0.0),
        "min": grouped["test_acc"].min(),
        "max": grouped["test_acc"].max(),
        "mean_val": grouped["val_acc"].mean(),
    })
    summary = summary.reindex([c for c in cell_order if c in summary.index])
    return summary.rename_axis("cell").reset_index()[SUMMARY_COLUMNS]


@log_performance("cmd_ablate")
def cmd_ablate(config: RunConfig) -> int:
    """
    Run every cell of the configured grid over the configured seeds.

    Educational Note:
    All cells share one dataset and differ only in the patched component;
    because every parameter block draws from its own named seed stream,
    two cells with the same seed start from identical weights wherever
    their architectures coincide.
    """
    config.require_dataset()
    out = prepare_output_dir(config.run.out, config.run.overwrite)
    _start_run_logging(config, out)
    cap = _apply_threads()

    dataset = load_dataset(config.data, config.run.seed)
    write_resolved_config(config, out)
    cells_dir = out / CELLS_DIR
    cells_dir.mkdir(exist_ok=True)

    base = config.model_dump(mode="json", exclude={"model": {"routing", "task"}})
    cells = ablation_cells(config.ablation.grid, config.ablation.values)
    jobs = [(label, _merge(base, patch), seed) for label, patch in cells for seed in config.ablation.seeds]
    workers = min(config.ablation.workers, cap) if cap is not None else config.ablation.workers
    logger.info("Ablation %s: %d cells x %d seeds, %d worker(s)",
                config.ablation.grid.value, len(cells), len(config.ablation.seeds), workers)

    rows: List[Dict[str, Any]] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=torch.set_num_threads, initargs=(1,)) as pool:
            futures = [pool.submit(_run_cell, label, data, seed, dataset, str(cells_dir)) for label, data, seed in jobs]
            for future in futures:
                rows.append(future.result())
                event_logger.log_event("ablation_cell_completed", **rows[-1])
    else:
        for label, data, seed in jobs:
            rows.append(_run_cell(label, data, seed, dataset, str(cells_dir)))
            event_logger.log_event("ablation_cell_completed", **rows[-1])

    summary = summarize_ablation(rows, [label for label, _ in cells])
    summary.to_csv(out / SUMMARY_NAME, index=False, float_format=FLOAT_FORMAT)
    for row in summary.itertuples(index=False):
        print(f"{row.cell:<24} {row.mean:.4f} +- {row.std:.4f} ({row.seeds} seeds)")
    return 0


# ============================================================================
# export-embeddings / gen-synthetic
# ============================================================================

@log_performance("cmd_export_embeddings")
def cmd_export_embeddings(
    config: RunConfig,
    checkpoint: Union[str, Path],
    output: Optional[Union[str, Path]] = None,
) -> int:
    """
    Write one CSV row per node (or graph): id, label, z_0..z_{D-1}.

    The coordinates are the tangent vector of the winning class capsule,
    ready for an offline 2-D projection.
    """
    config.require_dataset()
    dataset = load_dataset(config.data, config.run.seed)
    ckpt = load_checkpoint(checkpoint)
    ckpt.check_compatible(dataset)

    output = Path(output) if output is not None else Path(config.run.out) / EMBEDDINGS_NAME
    if output.exists() and not config.run.overwrite:
        raise OutputExistsError(f"{output} exists (pass --overwrite to replace it)")
    output.parent.mkdir(parents=True, exist_ok=True)

    graphs = [dataset.graph] if dataset.task == Task.NODE else dataset.graphs
    with ckpt.applied_policy(), torch.no_grad():
        z = ckpt.model.embed(GraphBatch.from_graphs(graphs)).cpu().numpy()

    frame = pd.DataFrame(z, columns=[f"z_{i}" for i in range(z.shape[1])])
    frame.insert(0, "label", np.asarray(dataset.labels, dtype=np.int64))
    frame.insert(0, "id", np.arange(z.shape[0], dtype=np.int64))
    if not np.isfinite(z).all():
        logger.warning("Embeddings contain non-finite values")
    frame.to_csv(output, index=False, float_format=FLOAT_FORMAT)
    print(f"{z.shape[0]} rows {z.shape[1]} dims -> {output}")
    return 0


@log_performance("cmd_gen_synthetic")
def cmd_gen_synthetic(spec: SyntheticSpec, out: Union[str, Path], overwrite: bool = False) -> int:
    """Generate a synthetic node dataset and save it in the node text format."""
    dataset = generate_synthetic(spec)
    out = prepare_output_dir(out, overwrite)
    save_node_dataset(dataset, out)
    summary = dataset.summary()
    print(f"{summary['nodes']} nodes {summary['edges']} edges {summary['classes']} classes")
    return 0

