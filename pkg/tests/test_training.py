"""
Tests for the Optimizer, Training Loop and Evaluation

Educational Note:
Training tests use the six-node and eight-graph fixtures from conftest so
a full run takes well under a second. They check the contract of train()
rather than accuracy numbers: report shape, seed determinism, the
zero-epoch report, checkpointing of the best validation epoch and the
errors raised for bad input.

To run these tests:
    pytest tests/test_training.py -v
"""

from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
import torch

from src.data.dataset import Task
from src.models import ClassifierMode
from src.routing import RoutingMode
from src.training import (
    REPORT_COLUMNS,
    OptimizerConfig,
    OptimizerState,
    TrainingConfig,
    TrainReport,
    deterministic_algorithms,
    evaluate,
    optimizer_step,
    train,
)
from src.training.trainer import CHECKPOINT_NAME
from src.utils.errors import ConfigError, DatasetError, DimensionMismatchError, DivergenceError


@pytest.fixture
def quick_training():
    return TrainingConfig(epochs=3, learning_rate=0.01)


# ============================================================================
# Optimizer
# ============================================================================

@pytest.mark.unit
def test_zero_gradient_leaves_parameters_unchanged():
    w = torch.nn.Parameter(torch.tensor([1.0, -2.0], dtype=torch.float64))
    state = OptimizerState.create([w], OptimizerConfig(weight_decay=0.0))
    optimizer_step([w], [torch.zeros(2, dtype=torch.float64)], state)
    assert w.tolist() == [1.0, -2.0]
    assert state.step == 1


@pytest.mark.unit
def test_first_step_moves_against_the_gradient():
    w = torch.nn.Parameter(torch.zeros(3, dtype=torch.float64))
    state = OptimizerState.create([w], OptimizerConfig(learning_rate=0.1, weight_decay=0.0))
    optimizer_step([w], [torch.tensor([2.0, -0.5, 1e-3], dtype=torch.float64)], state)
    # bias-corrected Adam's first step is lr * sign(g) up to eps
    assert torch.allclose(w.detach(), torch.tensor([-0.1, 0.1, -0.1], dtype=torch.float64), atol=1e-5)
    first, second = state.moments(w)
    assert torch.count_nonzero(first) == 3
    assert bool((second > 0).all())


@pytest.mark.unit
def test_optimizer_converges_on_a_scalar_quadratic():
    """200 steps on (w - 3)^2 from w = 0 end within 0.1 of the minimum."""
    w = torch.nn.Parameter(torch.zeros(1, dtype=torch.float64))
    state = OptimizerState.create([w], OptimizerConfig(learning_rate=0.1, weight_decay=0.0))
    for _ in range(200):
        optimizer_step([w], [2.0 * (w.detach() - 3.0)], state)
    assert abs(float(w) - 3.0) < 0.1
    assert state.to_dict()["step"] == 200


@pytest.mark.unit
def test_optimizer_step_checks_shapes():
    w = torch.nn.Parameter(torch.zeros(2, dtype=torch.float64))
    state = OptimizerState.create([w])
    with pytest.raises(DimensionMismatchError):
        optimizer_step([w], [torch.zeros(3, dtype=torch.float64)], state)
    with pytest.raises(DimensionMismatchError):
        optimizer_step([w], [], state)


@pytest.mark.unit
def test_training_config_maps_weight_decay_mode():
    assert TrainingConfig(weight_decay=0.5).optimizer_config().weight_decay == 0.5
    assert TrainingConfig(weight_decay=0.5, weight_decay_mode="loss").optimizer_config().weight_decay == 0.0
    with pytest.raises(ValueError):
        TrainingConfig(weight_decay_mode="sometimes")


# ============================================================================
# Training Loop
# ============================================================================

@pytest.mark.integration
def test_train_writes_report_and_checkpoint(tmp_path, six_node_dataset, small_model_config, quick_training):
    result = train(six_node_dataset, small_model_config, quick_training, seed=0, out_dir=tmp_path)
    report = result.report

    assert [row.epoch for row in report.rows] == [1, 2, 3]
    assert list(report.to_frame().columns) == REPORT_COLUMNS
    for row in report.rows:
        assert np.isfinite(row.loss)
        assert 0.0 <= row.train_acc <= 1.0
        assert 0.0 <= row.val_acc <= 1.0
        assert 0.0 <= row.test_acc <= 1.0
    assert report.best_epoch in (1, 2, 3)
    assert report.best_row.val_acc == report.best_val_acc
    assert result.checkpoint_path == tmp_path / CHECKPOINT_NAME
    assert result.checkpoint_path.exists()
    assert not result.model.training


@pytest.mark.integration
def test_checkpoint_scores_match_best_epoch(tmp_path, six_node_dataset, small_model_config, quick_training):
    report = train(six_node_dataset, small_model_config, quick_training, seed=2, out_dir=tmp_path).report
    best = report.best_row
    assert evaluate(tmp_path / CHECKPOINT_NAME, six_node_dataset, "val") == best.val_acc
    assert evaluate(tmp_path / CHECKPOINT_NAME, six_node_dataset, "test") == best.test_acc


@pytest.mark.integration
def test_same_seed_same_report(six_node_dataset, small_model_config, quick_training):
    first = train(six_node_dataset, small_model_config, quick_training, seed=7).report
    second = train(six_node_dataset, small_model_config, quick_training, seed=7).report
    pd.testing.assert_frame_equal(first.to_frame().drop(columns="seconds"), second.to_frame().drop(columns="seconds"))
    assert first.best_epoch == second.best_epoch


@pytest.mark.integration
def test_zero_epochs_reports_initialization(tmp_path, six_node_dataset, small_model_config):
    result = train(six_node_dataset, small_model_config, TrainingConfig(epochs=0), out_dir=tmp_path)
    assert [row.epoch for row in result.report.rows] == [0]
    assert result.report.best_epoch == 0
    assert np.isfinite(result.report.final.loss)
    assert (tmp_path / CHECKPOINT_NAME).exists()


@pytest.mark.integration
def test_loss_decreases_on_separable_fixture(six_node_dataset, small_model_config):
    config = small_model_config.model_copy(update={"classifier": ClassifierMode.LINEAR})
    report = train(six_node_dataset, config, TrainingConfig(epochs=10, learning_rate=0.01, weight_decay=0.0)).report
    assert report.rows[-1].loss < report.rows[0].loss


@pytest.mark.integration
@pytest.mark.parametrize("mode", [RoutingMode.EUCLIDEAN, RoutingMode.PCR])
def test_train_other_routing_modes(six_node_dataset, small_model_config, quick_training, mode):
    routing = small_model_config.routing.model_copy(update={"mode": mode})
    result = train(six_node_dataset, small_model_config.model_copy(update={"routing": routing}), quick_training)
    assert len(result.report.rows) == 3


@pytest.mark.integration
def test_train_graph_task_minibatches(tiny_graph_dataset, small_model_config):
    config = small_model_config.model_copy(update={"task": Task.GRAPH})
    report = train(tiny_graph_dataset, config, TrainingConfig(epochs=2, batch_size=3)).report
    assert len(report.rows) == 2
    assert all(np.isfinite(row.loss) for row in report.rows)


@pytest.mark.integration
def test_loss_mode_weight_decay(six_node_dataset, small_model_config):
    cfg = TrainingConfig(epochs=1, weight_decay=1e-3, weight_decay_mode="loss")
    assert len(train(six_node_dataset, small_model_config, cfg).report.rows) == 1


@pytest.mark.unit
def test_task_mismatch_is_a_config_error(tiny_graph_dataset, small_model_config):
    with pytest.raises(ConfigError, match="does not match"):
        train(tiny_graph_dataset, small_model_config, TrainingConfig(epochs=1))


@pytest.mark.unit
def test_no_training_examples(six_node_dataset, small_model_config):
    empty = replace(six_node_dataset, train_mask=np.zeros(6, dtype=bool))
    with pytest.raises(DatasetError, match="no training examples"):
        train(empty, small_model_config, TrainingConfig(epochs=1))


@pytest.mark.unit
def test_non_finite_loss_raises_divergence(six_node_dataset, small_model_config, monkeypatch):
    def nan_loss(logits, labels, parameters=None, weight_decay=0.0):
        return logits.sum() * float("nan")

    monkeypatch.setattr("src.training.trainer.cross_entropy_loss", nan_loss)
    with pytest.raises(DivergenceError) as excinfo:
        train(six_node_dataset, small_model_config, TrainingConfig(epochs=2))
    assert excinfo.value.epoch == 1
    assert "epoch 1" in str(excinfo.value)


# ============================================================================
# Report and Evaluation
# ============================================================================

@pytest.mark.unit
def test_report_csv_round_trip(tmp_path, six_node_dataset, small_model_config, quick_training):
    report = train(six_node_dataset, small_model_config, quick_training).report
    path = report.to_csv(tmp_path / "report.csv")
    loaded = TrainReport.from_csv(path)
    pd.testing.assert_frame_equal(loaded.to_frame(), report.to_frame(), check_exact=True)


@pytest.mark.unit
def test_report_csv_missing_columns(tmp_path):
    path = tmp_path / "report.csv"
    path.write_text("epoch,loss\n1,0.5\n")
    with pytest.raises(DatasetError, match="missing columns"):
        TrainReport.from_csv(path)


@pytest.mark.unit
def test_report_summary(six_node_dataset, small_model_config):
    summary = train(six_node_dataset, small_model_config, TrainingConfig(epochs=1)).report.summary()
    assert summary["epochs"] == 1
    assert summary["parameters"] > 0
    assert set(summary) >= {"final_loss", "train_acc", "val_acc", "test_acc", "best_epoch"}


@pytest.mark.unit
def test_evaluate_rejects_unknown_split(tmp_path, six_node_dataset, small_model_config):
    train(six_node_dataset, small_model_config, TrainingConfig(epochs=0), out_dir=tmp_path)
    with pytest.raises(ConfigError):
        evaluate(tmp_path / CHECKPOINT_NAME, six_node_dataset, "holdout")


@pytest.mark.unit
def test_deterministic_algorithms_restores_setting():
    before = torch.are_deterministic_algorithms_enabled()
    with deterministic_algorithms(True):
        assert torch.are_deterministic_algorithms_enabled()
    assert torch.are_deterministic_algorithms_enabled() == before
