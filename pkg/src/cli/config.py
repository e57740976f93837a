"""
Run configuration.

A run is configured by a YAML document with the sections run, data,
model, routing, training and ablation (grammar in docs/file_formats.md).
Precedence is defaults < config file < command-line flags. The resolved
configuration is written to resolved_config.yaml in the output directory
and is enough to re-run the experiment.

Environment (a .env file in the working directory is loaded first):
    PRCAPS_NUM_THREADS   caps torch intra-op threads and ablation workers
    PRCAPS_LOG_LEVEL     default log level
"""

import copy
import logging
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.data.dataset import Task
from src.data.synthetic import SyntheticFamily, SyntheticSpec
from src.models.config import ModelConfig
from src.routing.config import RoutingConfig
from src.training.trainer import TrainingConfig
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

RESOLVED_CONFIG_NAME = "resolved_config.yaml"
THREADS_ENV_VAR = "PRCAPS_NUM_THREADS"


# ============================================================================
# Sections
# ============================================================================

class RunSection(BaseModel):
    """Run identity and output location."""
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(0, ge=0, description="Seed of every random stream")
    out: str = Field("runs/latest", description="Output directory")
    overwrite: bool = Field(False, description="Reuse a non-empty output directory")
    log_level: Optional[str] = Field(None, description="DEBUG | INFO | WARNING | ERROR (default PRCAPS_LOG_LEVEL, then INFO)")


class SyntheticSection(BaseModel):
    """SyntheticSpec fields, used when data.path is not set."""
    model_config = ConfigDict(extra="forbid")

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

    def to_spec(self) -> SyntheticSpec:
        return SyntheticSpec(**self.model_dump())


class DataSection(BaseModel):
    """Where the dataset comes from."""
    model_config = ConfigDict(extra="forbid")

    task: Task = Field(Task.NODE, description="node | graph")
    path: Optional[str] = Field(None, description="Node dataset directory, graph JSON-lines file or TU directory")
    synthetic: Optional[SyntheticSection] = Field(None, description="Generate a synthetic node dataset instead")
    normalize_features: bool = Field(False, description="Row-wise L2 normalization of node features")

    @model_validator(mode="after")
    def _one_source(self) -> "DataSection":
        if self.path is not None and self.synthetic is not None:
            raise ValueError("set either data.path or data.synthetic, not both")
        if self.synthetic is not None and self.task != Task.NODE:
            raise ValueError("synthetic datasets are node-classification datasets (data.task: node)")
        return self


class AblationGrid(str, Enum):
    """Ablation grids run by `prcaps ablate`."""
    ROUTING_CLASSIFIER = "routing_classifier"
    COMPONENTS = "components"
    K = "K"
    T = "T"
    DIMS = "dims"
    GATING = "gating"
    CURVATURE = "curvature"


class AblationSection(BaseModel):
    """Grid, seeds and parallelism of an ablation."""
    model_config = ConfigDict(extra="forbid")

    grid: AblationGrid = Field(AblationGrid.ROUTING_CLASSIFIER)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)
    values: Optional[List[Any]] = Field(None, description="Sweep values for the K, T and dims grids")
    workers: int = Field(1, ge=1, description="Parallel worker processes")


# ============================================================================
# Run Configuration
# ============================================================================

class RunConfig(BaseModel):
    """
    Complete configuration of a train, evaluate or ablate command.

    Educational Note:
    The model section holds architecture fields only; routing settings
    live in their own section and the task comes from the data section,
    so each value has exactly one place where it can be set.
    """
    model_config = ConfigDict(extra="forbid")

    run: RunSection = Field(default_factory=RunSection)
    data: DataSection = Field(default_factory=DataSection)
    model: ModelConfig = Field(default_factory=ModelConfig)
    routing: RoutingConfig = Field(default_factory=RoutingConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    ablation: AblationSection = Field(default_factory=AblationSection)

    @model_validator(mode="after")
    def _single_source_of_truth(self) -> "RunConfig":
        for name in ("routing", "task"):
            if name in self.model.model_fields_set:
                raise ValueError(f"model.{name} is not allowed; set it in the {'routing' if name == 'routing' else 'data'} section")
        return self

    def model_settings(self) -> ModelConfig:
        """ModelConfig with the routing section and the data task filled in."""
        return self.model.model_copy(update={"routing": self.routing, "task": self.data.task})

    def require_dataset(self) -> None:
        """Raise ConfigError unless a dataset source is configured."""
        if self.data.path is None and self.data.synthetic is None:
            raise ConfigError("data.path is required (or configure data.synthetic)")

    def to_yaml(self) -> str:
        data = self.model_dump(mode="json", exclude={"model": {"routing", "task"}})
        return yaml.safe_dump(data, sort_keys=False)


# ============================================================================
# Loading, Overrides and Snapshots
# ============================================================================

def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse a YAML config file into a dict of sections."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML ({e})") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping of sections")
    return data


def parse_dims(value: Union[str, Tuple[int, int], List[int]]) -> Tuple[int, int]:
    """Parse "s,t" (or a pair) into (s, t)."""
    try:
        if isinstance(value, str):
            s, t = (int(part) for part in value.split(","))
        else:
            s, t = (int(part) for part in value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"--dims expects 's,t' with two integers, got {value!r}") from e
    return s, t


# flag name -> (section, key)
FLAG_TARGETS = {
    "seed": ("run", "seed"),
    "out": ("run", "out"),
    "overwrite": ("run", "overwrite"),
    "log_level": ("run", "log_level"),
    "data": ("data", "path"),
    "task": ("data", "task"),
    "normalize_features": ("data", "normalize_features"),
    "routing": ("routing", "mode"),
    "classifier": ("model", "classifier"),
    "K": ("routing", "num_perspectives"),
    "T": ("routing", "iterations"),
    "epochs": ("training", "epochs"),
    "grid": ("ablation", "grid"),
    "workers": ("ablation", "workers"),
}


def apply_overrides(data: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Return a copy of `data` with non-None flag values written into their sections."""
    data = copy.deepcopy(data)
    for flag, value in overrides.items():
        if value is None:
            continue
        if flag == "dims":
            s, t = parse_dims(value)
            data.setdefault("model", {}).update({"s": s, "t": t})
            continue
        if flag == "routing":
            data.setdefault("model", {})["capsules"] = value != "none"
            if value == "none":
                continue
        if flag == "seeds":
            data.setdefault("ablation", {})["seeds"] = list(value)
            continue
        if flag not in FLAG_TARGETS:
            raise ConfigError(f"unknown override '{flag}'")
        section, key = FLAG_TARGETS[flag]
        if flag in ("overwrite", "normalize_features") and not value:
            continue
        data.setdefault(section, {})[key] = value
        if flag == "data":
            data["data"].pop("synthetic", None)
    return data


def build_run_config(data: Dict[str, Any]) -> RunConfig:
    """Validate a dict of sections; errors name the offending field."""
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_validation_error(e)) from e


def load_run_config(
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """
    Resolve defaults, the config file and flag overrides into a RunConfig.

    Raises:
        ConfigError: unreadable file, unknown key or out-of-range value
    """
    data = read_config_file(config_file) if config_file else {}
    data = apply_overrides(data, overrides or {})
    config = build_run_config(data)
    logger.debug("Resolved configuration:\n%s", config.to_yaml())
    return config


def write_resolved_config(config: RunConfig, out_dir: Union[str, Path]) -> Path:
    """Write resolved_config.yaml into the output directory."""
    path = Path(out_dir) / RESOLVED_CONFIG_NAME
    path.write_text(config.to_yaml(), encoding="utf-8")
    return path


def thread_cap() -> Optional[int]:
    """PRCAPS_NUM_THREADS as a positive integer, or None when unset."""
    raw = os.getenv(THREADS_ENV_VAR)
    if raw is None or raw.strip() == "":
        return None
    try:
        value = int(raw)
    except ValueError as e:
        raise ConfigError(f"{THREADS_ENV_VAR} must be a positive integer, got {raw!r}") from e
    if value < 1:
        raise ConfigError(f"{THREADS_ENV_VAR} must be a positive integer, got {value}")
    return value
