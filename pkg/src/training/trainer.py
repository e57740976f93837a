"""
Training loop and evaluation.

train() builds a PRCapsNet from a ModelConfig, runs the epochs, records
per-epoch metrics in a TrainReport and keeps the checkpoint with the best
validation accuracy. evaluate() scores a checkpoint on one split.

Batches:
    node task    one full-graph step per epoch (loss over training nodes)
    graph task   shuffled minibatches of `batch_size` training graphs

Educational Note:
Every source of randomness is a named stream of the run seed: parameter
init (encoder, routing, classifier), dropout and minibatch shuffling.
Together with deterministic torch algorithms this makes two runs with
the same seed produce identical reports, apart from wall-clock seconds.
"""

import logging
import time
from contextlib import contextmanager, nullcontext
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union

import numpy as np
import pandas as pd
import torch
from pydantic import BaseModel, ConfigDict, Field

from src.data.batching import GraphBatch
from src.data.dataset import SPLITS, GraphDataset, Task
from src.models.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from src.models.classifier import cross_entropy_loss
from src.models.config import ModelConfig
from src.models.prcapsnet import PRCapsNet, parameter_count
from src.utils.errors import ConfigError, DatasetError, DivergenceError
from src.utils.logging_config import PerformanceLogger, StructuredLogger
from src.utils.seeding import derive_seed, numpy_rng
from .optimizer import OptimizerConfig, OptimizerState

logger = logging.getLogger(__name__)
perf_logger = PerformanceLogger()
event_logger = StructuredLogger()

REPORT_COLUMNS = ["epoch", "loss", "train_acc", "val_acc", "test_acc", "seconds"]
CHECKPOINT_NAME = "best.ckpt"


class TrainingConfig(BaseModel):
    """Training hyperparameters."""
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(100, ge=0, description="Training epochs")
    batch_size: int = Field(16, ge=1, description="Graphs per minibatch (graph task)")
    learning_rate: float = Field(1e-3, gt=0)
    weight_decay: float = Field(1e-4, ge=0)
    weight_decay_mode: str = Field("decoupled", pattern="^(decoupled|loss)$",
                                   description="decoupled (AdamW) or an explicit L2 term in the loss")
    betas: List[float] = Field(default_factory=lambda: [0.9, 0.999], min_length=2, max_length=2)
    eps: float = Field(1e-8, gt=0)
    deterministic: bool = Field(True, description="Enable torch deterministic algorithms")
    detect_anomaly: bool = Field(False, description="Run backward under autograd anomaly detection")

    def optimizer_config(self) -> OptimizerConfig:
        decoupled = self.weight_decay if self.weight_decay_mode == "decoupled" else 0.0
        return OptimizerConfig(
            learning_rate=self.learning_rate,
            weight_decay=decoupled,
            betas=tuple(self.betas),
            eps=self.eps,
        )


# ============================================================================
# Report
# ============================================================================

@dataclass
class EpochMetrics:
    """One report row."""
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    test_acc: float
    seconds: float

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in REPORT_COLUMNS}


@dataclass
class TrainReport:
    """
    Per-epoch metrics of a run.

    Rows cover epochs 1..E; a run with zero epochs has a single row for
    epoch 0 holding the initialization metrics.
    """
    seed: int
    rows: List[EpochMetrics] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_val_acc: Optional[float] = None
    parameter_count: int = 0
    eval_seconds: float = 0.0

    @property
    def final(self) -> EpochMetrics:
        return self.rows[-1]

    @property
    def best_row(self) -> EpochMetrics:
        """Row of the best-validation epoch (the checkpointed one)."""
        for row in self.rows:
            if row.epoch == self.best_epoch:
                return row
        return self.final

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.to_dict() for row in self.rows], columns=REPORT_COLUMNS)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path], seed: int = 0) -> "TrainReport":
        frame = pd.read_csv(path, float_precision="round_trip")
        missing = [c for c in REPORT_COLUMNS if c not in frame.columns]
        if missing:
            raise DatasetError(f"{path}: report is missing columns {missing}")
        rows = [
            EpochMetrics(int(r.epoch), float(r.loss), float(r.train_acc), float(r.val_acc), float(r.test_acc), float(r.seconds))
            for r in frame.itertuples(index=False)
        ]
        return cls(seed=seed, rows=rows)

    def summary(self) -> Dict[str, Any]:
        final = self.final
        return {
            "seed": self.seed,
            "epochs": final.epoch,
            "final_loss": final.loss,
            "train_acc": final.train_acc,
            "val_acc": final.val_acc,
            "test_acc": final.test_acc,
            "best_epoch": self.best_epoch,
            "best_val_acc": self.best_val_acc,
            "parameters": self.parameter_count,
            "eval_seconds": round(self.eval_seconds, 3),
        }


@dataclass
class TrainResult:
    """What train() returns."""
    report: TrainReport
    model: PRCapsNet
    checkpoint_path: Optional[Path] = None


# ============================================================================
# Helpers
# ============================================================================

@contextmanager
def deterministic_algorithms(enabled: bool = True) -> Iterator[None]:
    """Temporarily switch torch deterministic algorithms on."""
    previous = torch.are_deterministic_algorithms_enabled()
    previous_warn = torch.is_deterministic_algorithms_warn_only_enabled()
    torch.use_deterministic_algorithms(enabled, warn_only=True)
    try:
        yield
    finally:
        torch.use_deterministic_algorithms(previous, warn_only=previous_warn)


class _Batches:
    """Tensor views of a dataset for training and evaluation."""

    def __init__(self, dataset: GraphDataset):
        self.dataset = dataset
        self.task = dataset.task
        self.labels = torch.from_numpy(np.asarray(dataset.labels, dtype=np.int64))
        self.indices = {split: dataset.split_indices(split) for split in SPLITS}
        if self.task == Task.NODE:
            self.full = GraphBatch.from_graphs([dataset.graph])
        self._eval: Dict[str, Optional[GraphBatch]] = {}

    def eval_batch(self, split: str) -> Optional[GraphBatch]:
        """Batch whose model output rows align with split_labels(split)."""
        if self.task == Task.NODE:
            return self.full
        if split not in self._eval:
            idx = self.indices[split]
            self._eval[split] = GraphBatch.from_graphs([self.dataset.graphs[i] for i in idx]) if idx.size else None
        return self._eval[split]

    def eval_rows(self, split: str) -> torch.Tensor:
        if self.task == Task.NODE:
            return torch.from_numpy(self.indices[split])
        return torch.arange(self.indices[split].size)

    def split_labels(self, split: str) -> torch.Tensor:
        return self.labels[torch.from_numpy(self.indices[split])]

    def train_batches(self, batch_size: int, rng: np.random.Generator):
        """Yield (batch, output rows, labels) for one epoch."""
        train = self.indices["train"]
        if self.task == Task.NODE:
            yield self.full, torch.from_numpy(train), self.labels[torch.from_numpy(train)]
            return
        order = train[rng.permutation(train.size)]
        for start in range(0, order.size, batch_size):
            chunk = order[start:start + batch_size]
            batch = GraphBatch.from_graphs([self.dataset.graphs[i] for i in chunk])
            yield batch, torch.arange(chunk.size), self.labels[torch.from_numpy(chunk)]


def _accuracy(logits: torch.Tensor, labels: torch.Tensor) -> float:
    if labels.numel() == 0:
        return 0.0
    return float((logits.argmax(dim=-1) == labels).to(torch.float64).mean())


def _evaluate_splits(model: PRCapsNet, batches: _Batches, splits=SPLITS) -> Dict[str, float]:
    model.eval()
    scores = {}
    with torch.no_grad():
        for split in splits:
            batch = batches.eval_batch(split)
            if batch is None:
                scores[split] = 0.0
                continue
            logits = model(batch)[batches.eval_rows(split)]
            scores[split] = _accuracy(logits, batches.split_labels(split))
    return scores


def _check_finite_parameters(model: PRCapsNet, epoch: int) -> None:
    for name, p in model.named_parameters():
        if not bool(torch.isfinite(p).all()):
            raise DivergenceError(f"parameter '{name}' became non-finite", epoch=epoch)


# ============================================================================
# Training
# ============================================================================

def train(
    dataset: GraphDataset,
    model_config: ModelConfig,
    training_config: Optional[TrainingConfig] = None,
    seed: int = 0,
    out_dir: Optional[Union[str, Path]] = None,
) -> TrainResult:
    """
    Train a PRCapsNet on a dataset.

    Args:
        dataset: Validated dataset with train/val/test masks
        model_config: Architecture (its task must match the dataset)
        training_config: Epochs, batch size and optimizer settings
        seed: Run seed
        out_dir: Where best.ckpt is written (no checkpoint when None)

    Returns:
        TrainResult with the report, the final model and the checkpoint path

    Raises:
        ConfigError: task mismatch
        DatasetError: no training examples
        DivergenceError: non-finite loss or parameters, with the epoch
    """
    cfg = training_config or TrainingConfig()
    if model_config.task != dataset.task:
        raise ConfigError(
            f"model task '{model_config.task.value}' does not match dataset task '{dataset.task.value}'"
        )
    batches = _Batches(dataset)
    if batches.indices["train"].size == 0:
        raise DatasetError(f"dataset '{dataset.name}' has no training examples")

    checkpoint_path = Path(out_dir) / CHECKPOINT_NAME if out_dir is not None else None
    shuffle_rng = numpy_rng(seed, "shuffle")
    l2_weight = cfg.weight_decay if cfg.weight_decay_mode == "loss" else 0.0

    with deterministic_algorithms(cfg.deterministic), torch.random.fork_rng(devices=[]):
        torch.manual_seed(derive_seed(seed, "dropout"))
        model = PRCapsNet(model_config, dataset.num_features, dataset.num_classes, seed=seed)
        state = OptimizerState.create(model.parameters(), cfg.optimizer_config())
        report = TrainReport(seed=seed, parameter_count=parameter_count(model))

        event_logger.log_event(
            "run_started", dataset=dataset.name, seed=seed, epochs=cfg.epochs,
            routing=model_config.routing_mode, classifier=model_config.classifier.value,
            parameters=report.parameter_count,
        )

        def save_best(epoch: int, scores: Dict[str, float]) -> None:
            report.best_epoch, report.best_val_acc = epoch, scores["val"]
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, model, {"epoch": epoch, "val_acc": scores["val"], "seed": seed})
                event_logger.log_event("checkpoint_saved", epoch=epoch, val_acc=scores["val"], path=str(checkpoint_path))

        if cfg.epochs == 0:
            started = time.perf_counter()
            scores = _evaluate_splits(model, batches)
            with torch.no_grad():
                logits = model(batches.eval_batch("train"))
                init_loss = float(cross_entropy_loss(logits[batches.eval_rows("train")], batches.split_labels("train")))
            report.eval_seconds += time.perf_counter() - started
            report.rows.append(EpochMetrics(0, init_loss, scores["train"], scores["val"], scores["test"],
                                            time.perf_counter() - started))
            save_best(0, scores)

        has_val = batches.indices["val"].size > 0
        for epoch in range(1, cfg.epochs + 1):
            started = time.perf_counter()
            model.train()
            total, count = 0.0, 0
            for batch, rows, labels in batches.train_batches(cfg.batch_size, shuffle_rng):
                state.optimizer.zero_grad(set_to_none=True)
                with torch.autograd.detect_anomaly(check_nan=True) if cfg.detect_anomaly else nullcontext():
                    logits = model(batch)[rows]
                    batch_loss = cross_entropy_loss(logits, labels, model.parameters(), l2_weight)
                    if not bool(torch.isfinite(batch_loss)):
                        event_logger.log_event("divergence", level=logging.ERROR, epoch=epoch, loss=float(batch_loss))
                        raise DivergenceError(f"loss became {float(batch_loss)}", epoch=epoch)
                    batch_loss.backward()
                state.optimizer.step()
                total += float(batch_loss) * labels.numel()
                count += labels.numel()
            _check_finite_parameters(model, epoch)

            eval_started = time.perf_counter()
            scores = _evaluate_splits(model, batches)
            report.eval_seconds += time.perf_counter() - eval_started
            seconds = time.perf_counter() - started
            metrics = EpochMetrics(epoch, total / count, scores["train"], scores["val"], scores["test"], seconds)
            report.rows.append(metrics)

            if report.best_val_acc is None or not has_val or scores["val"] > report.best_val_acc:
                save_best(epoch, scores)

            event_logger.log_event("epoch_completed", **metrics.to_dict())
            perf_logger.log_operation("epoch", seconds * 1000.0, {"epoch": epoch}, include_memory=True)
            logger.debug(
                "epoch %d loss %.4f train %.3f val %.3f test %.3f",
                epoch, metrics.loss, metrics.train_acc, metrics.val_acc, metrics.test_acc
            )

    model.eval()
    logger.info("Training finished: %s", report.summary())
    return TrainResult(report=report, model=model, checkpoint_path=checkpoint_path)


# ============================================================================
# Evaluation
# ============================================================================

def evaluate(
    checkpoint: Union[str, Path, Checkpoint],
    dataset: GraphDataset,
    split: str = "test",
) -> float:
    """
    Mean accuracy of a checkpoint on one split (dropout off).

    Raises:
        CheckpointMismatchError: the dataset's features, classes or task
            differ from what the checkpoint was trained on
    """
    if split not in SPLITS:
        raise ConfigError(f"unknown split '{split}'; expected one of {SPLITS}")
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    ckpt.check_compatible(dataset)
    batches = _Batches(dataset)
    started = time.perf_counter()
    with ckpt.applied_policy():
        score = _evaluate_splits(ckpt.model, batches, (split,))[split]
    perf_logger.log_operation("evaluate", (time.perf_counter() - started) * 1000.0, {"split": split})
    return score
