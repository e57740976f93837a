"""
Training: gradients, the optimizer, the training loop and evaluation.
"""

from src.training.gradients import GradientCheckResult, finite_difference_check, gradient
from src.training.optimizer import OptimizerConfig, OptimizerState, build_optimizer, optimizer_step
from src.training.trainer import (
    REPORT_COLUMNS,
    EpochMetrics,
    TrainingConfig,
    TrainReport,
    TrainResult,
    deterministic_algorithms,
    evaluate,
    train,
)

__all__ = [
    # Gradients
    'gradient',
    'finite_difference_check',
    'GradientCheckResult',
    # Optimizer
    'OptimizerConfig',
    'OptimizerState',
    'build_optimizer',
    'optimizer_step',
    # Training loop
    'TrainingConfig',
    'EpochMetrics',
    'TrainReport',
    'TrainResult',
    'REPORT_COLUMNS',
    'deterministic_algorithms',
    'train',
    'evaluate',
]
