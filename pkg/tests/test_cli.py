"""
Tests for the prcaps Command Line and Run Configuration

Educational Note:
main() returns the exit code instead of calling sys.exit, so these tests
drive the real command line in-process with an argv list and read what
it printed through capsys. Every run writes into pytest's tmp_path and
uses a tiny synthetic tree so a full train takes about a second.

To run these tests:
    pytest tests/test_cli.py -v
"""

import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path

import pandas as pd
import pytest
import yaml

from main import build_parser, main, overrides_from_args
from src.cli import (
    RESOLVED_CONFIG_NAME,
    THREADS_ENV_VAR,
    AblationGrid,
    ablation_cells,
    apply_overrides,
    build_run_config,
    load_run_config,
    parse_dims,
    prepare_output_dir,
    summarize_ablation,
    thread_cap,
)
from src.data import SyntheticSpec, load_node_dataset
from src.models import ClassifierMode
from src.routing import RoutingMode
from src.training.trainer import CHECKPOINT_NAME
from src.utils.errors import ConfigError, OutputExistsError
from src.utils.logging_config import LogConfig, PerformanceLogger

pytestmark = pytest.mark.cli

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

TINY_RUN = {
    "data": {"synthetic": {"family": "tree", "depth": 3, "branching": 2}},
    "model": {
        "encoder_dim": 8,
        "capsule_layers": 2,
        "s": 2,
        "t": 2,
        "primary_capsules": 3,
        "hidden_capsules": 3,
        "dropout": 0.0,
    },
    "routing": {"iterations": 2, "num_perspectives": 2, "align_dim": 4, "context_dim": 4},
    "training": {"epochs": 3, "learning_rate": 0.01},
    "ablation": {"seeds": [0]},
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY_RUN))
    return path


@pytest.fixture
def trained(tmp_path, config_file, capsys):
    """Output directory of a finished three-epoch run."""
    out = tmp_path / "run"
    assert main(["train", "--config", str(config_file), "--out", str(out)]) == 0
    capsys.readouterr()
    return out


def read_report(out):
    return pd.read_csv(out / "report.csv").drop(columns="seconds")


# ============================================================================
# Configuration
# ============================================================================

@pytest.mark.unit
def test_defaults_resolve_without_a_file():
    config = load_run_config()
    assert config.run.seed == 0
    assert config.routing.mode == RoutingMode.ACR
    assert config.model.classifier == ClassifierMode.PRCC
    assert config.training.epochs == 100


@pytest.mark.unit
def test_flags_override_the_file(config_file):
    config = load_run_config(config_file, {"seed": 5, "K": 3, "T": 4, "dims": "4,3", "epochs": 7, "classifier": "linear"})
    assert config.run.seed == 5
    assert config.routing.num_perspectives == 3
    assert config.routing.iterations == 4
    assert (config.model.s, config.model.t) == (4, 3)
    assert config.training.epochs == 7
    assert config.model.classifier == ClassifierMode.LINEAR
    # untouched file values survive
    assert config.model.encoder_dim == 8


@pytest.mark.unit
def test_routing_flag_toggles_capsules():
    assert not load_run_config(overrides={"routing": "none"}).model.capsules
    config = load_run_config(overrides={"routing": "pcr"})
    assert config.model.capsules
    assert config.model_settings().routing.mode == RoutingMode.PCR


@pytest.mark.unit
def test_data_flag_replaces_synthetic_source(config_file):
    config = load_run_config(config_file, {"data": "somewhere"})
    assert config.data.path == "somewhere"
    assert config.data.synthetic is None


@pytest.mark.unit
def test_model_settings_carry_task_and_routing():
    config = build_run_config({"data": {"task": "graph"}, "routing": {"mode": "pcr"}})
    settings = config.model_settings()
    assert settings.task.value == "graph"
    assert settings.routing.mode == RoutingMode.PCR


@pytest.mark.unit
@pytest.mark.parametrize(
    "data,message",
    [
        ({"model": {"bogus": 1}}, "model.bogus"),
        ({"routing": {"iterations": 0}}, "routing.iterations"),
        ({"model": {"routing": {"mode": "pcr"}}}, "routing section"),
        ({"model": {"task": "graph"}}, "data section"),
        ({"data": {"path": "x", "synthetic": {}}}, "not both"),
        ({"data": {"task": "graph", "synthetic": {}}}, "node-classification"),
        ({"training": {"weight_decay_mode": "sometimes"}}, "weight_decay_mode"),
    ],
)
def test_invalid_configuration_names_the_field(data, message):
    with pytest.raises(ConfigError, match=message):
        build_run_config(data)


@pytest.mark.unit
def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_run_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("run: [unclosed\n")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_run_config(bad)
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_run_config(listing)


@pytest.mark.unit
def test_parse_dims():
    assert parse_dims("9,9") == (9, 9)
    assert parse_dims([3, 2]) == (3, 2)
    with pytest.raises(ConfigError, match="s,t"):
        parse_dims("9")
    with pytest.raises(ConfigError):
        apply_overrides({}, {"dims": "a,b"})


@pytest.mark.unit
def test_unknown_override_is_rejected():
    with pytest.raises(ConfigError, match="unknown override"):
        apply_overrides({}, {"learning_rate": 0.1})


@pytest.mark.unit
def test_thread_cap(monkeypatch):
    monkeypatch.delenv(THREADS_ENV_VAR, raising=False)
    assert thread_cap() is None
    monkeypatch.setenv(THREADS_ENV_VAR, "3")
    assert thread_cap() == 3
    monkeypatch.setenv(THREADS_ENV_VAR, "0")
    with pytest.raises(ConfigError):
        thread_cap()
    monkeypatch.setenv(THREADS_ENV_VAR, "many")
    with pytest.raises(ConfigError):
        thread_cap()


@pytest.mark.unit
def test_parser_collects_overrides():
    args = build_parser().parse_args(["train", "--seed", "4", "--routing", "pcr", "--dims", "6,6"])
    overrides = overrides_from_args(args)
    assert overrides["seed"] == 4
    assert overrides["routing"] == "pcr"
    assert overrides["dims"] == "6,6"
    assert overrides["epochs"] is None


# ============================================================================
# Ablation Grids
# ============================================================================

@pytest.mark.unit
def test_routing_classifier_grid_order():
    labels = [label for label, _ in ablation_cells(AblationGrid.ROUTING_CLASSIFIER)]
    assert labels == [
        "euclidean+linear", "euclidean+prcc",
        "pcr+linear", "pcr+prcc",
        "acr+linear", "acr+prcc",
    ]


@pytest.mark.unit
def test_sweep_grids():
    assert [label for label, _ in ablation_cells(AblationGrid.K)] == ["K=1", "K=2", "K=4", "K=8"]
    assert [label for label, _ in ablation_cells(AblationGrid.T, [1, 3])] == ["T=1", "T=3"]
    assert ablation_cells(AblationGrid.DIMS)[0] == ("s=3,t=3", {"model": {"s": 3, "t": 3}})
    gating = dict(ablation_cells(AblationGrid.GATING))
    assert list(gating) == ["full", "no_curvature", "no_alignment", "no_consistency", "simple"]
    assert gating["no_alignment"]["routing"]["gate_terms"] == ["curvature", "consistency"]
    assert [label for label, _ in ablation_cells(AblationGrid.CURVATURE)] == ["adaptive", "fixed"]


@pytest.mark.unit
def test_every_grid_cell_is_a_valid_config():
    base = build_run_config(TINY_RUN).model_dump(mode="json", exclude={"model": {"routing", "task"}})
    for grid in AblationGrid:
        for _, patch in ablation_cells(grid):
            merged = {**base, **{k: {**base[k], **v} for k, v in patch.items()}}
            build_run_config(merged)


@pytest.mark.unit
def test_summarize_ablation_statistics():
    rows = [
        {"cell": "b", "routing": "acr", "classifier": "prcc", "seed": 0, "test_acc": 0.5, "val_acc": 0.4},
        {"cell": "a", "routing": "pcr", "classifier": "linear", "seed": 0, "test_acc": 0.25, "val_acc": 0.2},
        {"cell": "b", "routing": "acr", "classifier": "prcc", "seed": 1, "test_acc": 0.75, "val_acc": 0.6},
    ]
    summary = summarize_ablation(rows, ["a", "b"])
    assert summary["cell"].tolist() == ["a", "b"]
    b = summary.set_index("cell").loc["b"]
    assert b["mean"] == pytest.approx(0.625)
    assert b["std"] == pytest.approx(0.1767766952966369)
    assert b["seeds"] == 2
    assert summary.set_index("cell").loc["a", "std"] == 0.0


# ============================================================================
# Output Directories
# ============================================================================

@pytest.mark.unit
def test_prepare_output_dir(tmp_path):
    out = tmp_path / "out"
    assert prepare_output_dir(out) == out
    (out / "report.csv").write_text("old")
    (out / "notes.txt").write_text("mine")
    with pytest.raises(OutputExistsError, match="--overwrite"):
        prepare_output_dir(out)
    prepare_output_dir(out, overwrite=True)
    assert not (out / "report.csv").exists()
    assert (out / "notes.txt").exists()


# ============================================================================
# Commands
# ============================================================================

@pytest.mark.integration
def test_train_without_dataset_exits_2(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path / "run")]) == 2
    err = capsys.readouterr().err
    assert "data.path" in err
    assert "hint:" in err


@pytest.mark.integration
def test_usage_error_exits_2(capsys):
    assert main(["train", "--routing", "sideways"]) == 2
    assert "invalid choice" in capsys.readouterr().err


@pytest.mark.integration
def test_gen_synthetic_prints_counts(tmp_path, capsys):
    out = tmp_path / "tree"
    code = main(["gen-synthetic", "--family", "tree", "--depth", "3", "--branching", "2", "--out", str(out)])
    assert code == 0
    assert capsys.readouterr().out.strip() == "15 nodes 14 edges 2 classes"
    assert load_node_dataset(out).summary()["nodes"] == 15


@pytest.mark.integration
def test_gen_synthetic_errors(tmp_path, capsys):
    assert main(["gen-synthetic", "--noise", "1.5", "--out", str(tmp_path / "a")]) == 2
    taken = tmp_path / "taken"
    taken.mkdir()
    (taken / "keep.txt").write_text("x")
    assert main(["gen-synthetic", "--family", "tree", "--out", str(taken)]) == 4


@pytest.mark.integration
def test_train_writes_artifacts(tmp_path, config_file, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", str(config_file), "--out", str(out)]) == 0
    assert capsys.readouterr().out.startswith("epochs 3 loss")

    report = pd.read_csv(out / "report.csv")
    assert report["epoch"].tolist() == [1, 2, 3]
    assert report[["train_acc", "val_acc", "test_acc"]].stack().between(0.0, 1.0).all()
    for name in (CHECKPOINT_NAME, RESOLVED_CONFIG_NAME, "run.log"):
        assert (out / name).exists()


@pytest.mark.integration
def test_same_seed_gives_identical_reports(tmp_path, config_file):
    for name in ("a", "b"):
        assert main(["train", "--config", str(config_file), "--seed", "3", "--out", str(tmp_path / name)]) == 0
    pd.testing.assert_frame_equal(read_report(tmp_path / "a"), read_report(tmp_path / "b"))


@pytest.mark.integration
def test_resolved_config_repeats_the_run(tmp_path, trained):
    again = tmp_path / "again"
    assert main(["train", "--config", str(trained / RESOLVED_CONFIG_NAME), "--out", str(again)]) == 0
    pd.testing.assert_frame_equal(read_report(trained), read_report(again))


@pytest.mark.integration
def test_existing_output_needs_overwrite(config_file, trained, capsys):
    assert main(["train", "--config", str(config_file), "--out", str(trained)]) == 4
    assert "--overwrite" in capsys.readouterr().err
    assert main(["train", "--config", str(config_file), "--out", str(trained), "--overwrite", "--epochs", "1"]) == 0
    assert len(pd.read_csv(trained / "report.csv")) == 1


@pytest.mark.integration
def test_divergence_exits_3(tmp_path, config_file, monkeypatch, capsys):
    def nan_loss(logits, labels, parameters=None, weight_decay=0.0):
        return logits.sum() * float("nan")

    monkeypatch.setattr("src.training.trainer.cross_entropy_loss", nan_loss)
    assert main(["train", "--config", str(config_file), "--out", str(tmp_path / "nan")]) == 3
    assert "epoch 1" in capsys.readouterr().err


@pytest.mark.integration
def test_eval_matches_best_epoch(config_file, trained, capsys):
    best_val = pd.read_csv(trained / "report.csv")["val_acc"].max()
    code = main(["eval", "--config", str(config_file), "--checkpoint", str(trained / CHECKPOINT_NAME), "--split", "val"])
    assert code == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("val accuracy ")
    assert float(line.split()[-1]) == pytest.approx(best_val, abs=5e-5)


@pytest.mark.integration
def test_eval_on_mismatched_dataset_exits_2(tmp_path, config_file, trained, capsys):
    other = tmp_path / "other"
    assert main(["gen-synthetic", "--family", "cycle_clique", "--max-degree", "4", "--out", str(other)]) == 0
    code = main([
        "eval", "--config", str(config_file), "--data", str(other),
        "--checkpoint", str(trained / CHECKPOINT_NAME),
    ])
    assert code == 2
    assert "features 5 != 11" in capsys.readouterr().err


@pytest.mark.integration
def test_eval_missing_checkpoint_exits_4(tmp_path, config_file):
    assert main(["eval", "--config", str(config_file), "--checkpoint", str(tmp_path / "none.ckpt")]) == 4


def write_two_node_dataset(root, edges):
    root.mkdir()
    (root / "edges.tsv").write_text(edges)
    (root / "features.csv").write_text("1.0,0.0\n0.0,1.0\n")
    (root / "labels.csv").write_text("0\n1\n")
    (root / "splits.csv").write_text("train\ntest\n")
    return root


@pytest.mark.integration
def test_train_on_invalid_dataset_exits_2(tmp_path, config_file, capsys):
    data = write_two_node_dataset(tmp_path / "bad", "0\t7\n")
    code = main([
        "train", "--config", str(config_file), "--data", str(data), "--task", "node",
        "--out", str(tmp_path / "run"),
    ])
    assert code == 2
    assert "outside [0, 2)" in capsys.readouterr().err


@pytest.mark.integration
def test_train_on_incomplete_dataset_exits_4(tmp_path, config_file, capsys):
    data = write_two_node_dataset(tmp_path / "partial", "0\t1\n")
    (data / "labels.csv").unlink()
    code = main([
        "train", "--config", str(config_file), "--data", str(data), "--task", "node",
        "--out", str(tmp_path / "run"),
    ])
    assert code == 4
    assert "labels.csv" in capsys.readouterr().err


@pytest.mark.integration
def test_run_files_are_closed_after_each_command(tmp_path, config_file, trained):
    performance_log = trained / LogConfig.PERFORMANCE_LOG_FILE
    size = performance_log.stat().st_size
    assert size > 0
    assert logging.getLogger(PerformanceLogger.LOGGER_NAME).handlers == []
    assert not any(isinstance(h, RotatingFileHandler) for h in logging.getLogger().handlers)

    second = tmp_path / "second"
    assert main(["train", "--config", str(config_file), "--out", str(second)]) == 0
    assert performance_log.stat().st_size == size
    assert (second / LogConfig.PERFORMANCE_LOG_FILE).stat().st_size > 0


@pytest.mark.integration
def test_export_embeddings(tmp_path, config_file, trained, capsys):
    output = tmp_path / "emb.csv"
    code = main([
        "export-embeddings", "--config", str(config_file),
        "--checkpoint", str(trained / CHECKPOINT_NAME), "--output", str(output),
    ])
    assert code == 0
    frame = pd.read_csv(output)
    # capsule dimension is s + t + 1 = 5
    assert list(frame.columns) == ["id", "label", "z_0", "z_1", "z_2", "z_3", "z_4"]
    assert len(frame) == 15
    assert frame["id"].tolist() == list(range(15))
    assert capsys.readouterr().out.startswith("15 rows 5 dims")

    assert main([
        "export-embeddings", "--config", str(config_file),
        "--checkpoint", str(trained / CHECKPOINT_NAME), "--output", str(output),
    ]) == 4


@pytest.mark.integration
def test_ablate_routing_classifier_grid(tmp_path, config_file, capsys):
    out = tmp_path / "ablation"
    assert main(["ablate", "--config", str(config_file), "--epochs", "2", "--out", str(out)]) == 0
    summary = pd.read_csv(out / "summary.csv")
    assert len(summary) == 6
    assert summary["cell"].tolist()[0] == "euclidean+linear"
    assert summary["mean"].between(0.0, 1.0).all()
    assert (summary["std"] == 0.0).all()
    assert (summary["seeds"] == 1).all()
    assert len(list((out / "cells").glob("*.csv"))) == 6
    assert (out / RESOLVED_CONFIG_NAME).exists()


@pytest.mark.unit
@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.yaml")), ids=lambda p: p.name)
def test_shipped_configs_validate(path):
    load_run_config(path)


@pytest.mark.unit
def test_default_config_matches_the_defaults():
    documented, defaults = load_run_config(CONFIG_DIR / "default.yaml"), load_run_config()
    for section in ("run", "model", "routing", "training", "ablation"):
        assert getattr(documented, section) == getattr(defaults, section), section
    assert documented.data.synthetic.to_spec() == SyntheticSpec()
