"""
Model checkpoints.

Container layout (documented in docs/file_formats.md):

    PRCAPS1\\n                      magic line
    <torch.save payload>            dict of plain values and tensors

The payload holds the model config, the dataset dimensions the model was
built for, the numeric-policy record, the state dict and free-form run
metadata. It is read back with torch.load(weights_only=True), so a
checkpoint can never execute code on load.
"""

import io
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, Optional, Union

import torch

from src.data.dataset import GraphDataset
from src.geometry.policy import NumericPolicy, get_policy, set_policy
from src.utils.errors import CheckpointError, CheckpointMismatchError
from .config import ModelConfig
from .prcapsnet import PRCapsNet

logger = logging.getLogger(__name__)

MAGIC = b"PRCAPS1\n"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """A loaded checkpoint: the rebuilt model and what it was trained on."""
    model: PRCapsNet
    in_features: int
    num_classes: int
    task: str
    numeric_policy: Dict[str, Any]
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def config(self) -> ModelConfig:
        return self.model.config

    @property
    def policy(self) -> NumericPolicy:
        """The numeric policy the model was trained under."""
        return NumericPolicy.from_dict(self.numeric_policy)

    @contextmanager
    def applied_policy(self) -> Iterator[NumericPolicy]:
        """Install the checkpoint's numeric policy for the duration of the block."""
        policy = self.policy
        previous = set_policy(policy)
        try:
            yield policy
        finally:
            set_policy(previous)

    def check_compatible(self, dataset: GraphDataset) -> None:
        """
        Raise CheckpointMismatchError unless the dataset fits the model.
        """
        problems = []
        if dataset.num_features != self.in_features:
            problems.append(f"features {dataset.num_features} != {self.in_features}")
        if dataset.num_classes != self.num_classes:
            problems.append(f"classes {dataset.num_classes} != {self.num_classes}")
        if dataset.task.value != self.task:
            problems.append(f"task {dataset.task.value} != {self.task}")
        if problems:
            raise CheckpointMismatchError(
                f"checkpoint does not match dataset '{dataset.name}': " + "; ".join(problems)
            )


def save_checkpoint(
    path: Union[str, Path],
    model: PRCapsNet,
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write model and metadata in the PRCAPS1 container."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": FORMAT_VERSION,
        "model_config": model.config.model_dump(mode="json"),
        "in_features": int(model.in_features),
        "num_classes": int(model.num_classes),
        "task": model.config.task.value,
        "numeric_policy": get_policy().to_dict(),
        "state_dict": {name: tensor.detach().clone() for name, tensor in model.state_dict().items()},
        "metadata": dict(metadata or {}),
    }
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(buffer.getvalue())
    logger.debug("Saved checkpoint %s", path)
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a PRCAPS1 checkpoint and rebuild its model in eval mode.

    The model is rebuilt under the stored numeric policy. evaluate() and
    the embedding export run inference inside Checkpoint.applied_policy(),
    so a checkpoint is scored with the tolerances it was trained with. A
    warning is logged when they differ from the active policy.

    Raises:
        CheckpointError: missing file, bad magic, unreadable payload or state dict mismatch
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path.name} is not a PRCAPS1 checkpoint")
    try:
        payload = torch.load(io.BytesIO(raw[len(MAGIC):]), map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"{path.name}: unreadable payload ({e})") from e

    if payload.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path.name}: unsupported format version {payload.get('format_version')!r}")
    try:
        policy = NumericPolicy.from_dict(payload["numeric_policy"])
    except (KeyError, TypeError, AttributeError) as e:
        raise CheckpointError(f"{path.name}: invalid numeric policy record ({e})") from e
    if policy != get_policy():
        logger.warning(
            "%s was saved under a different numeric policy %s; it is applied when the checkpoint is evaluated",
            path.name, policy.to_dict(),
        )

    previous = set_policy(policy)
    try:
        config = ModelConfig.model_validate(payload["model_config"])
        model = PRCapsNet(config, payload["in_features"], payload["num_classes"])
        model.load_state_dict(payload["state_dict"], strict=True)
    except (KeyError, ValueError, RuntimeError) as e:
        raise CheckpointError(f"{path.name}: cannot rebuild model ({e})") from e
    finally:
        set_policy(previous)

    model.eval()
    return Checkpoint(
        model=model,
        in_features=payload["in_features"],
        num_classes=payload["num_classes"],
        task=payload["task"],
        numeric_policy=policy.to_dict(),
        metadata=payload.get("metadata", {}),
    )
