"""Dense associative memory with a sequential-learning benchmark harness."""

from .config import ConfigError, DatasetConfig, ExperimentConfig, MethodConfig
from .datasets import (
    DataError,
    RawImageSet,
    TaskDataset,
    build_task_sequence,
    synthetic_raw_set,
)
from .experiment import RunRecord, SweepAxis, SweepResult, run_experiment, sweep
from .metrics import TaskScore, average_accuracy, evaluate_task, macro_f1_from_confusion
from .network import (
    ItemSet,
    NetParams,
    NumericError,
    PatternLayout,
    TrainingHooks,
    TrainLog,
    batch_loss_and_grad,
    classify,
    init_bank,
    interaction,
    neuron_field,
    relax,
    train_task,
)
from .projection import agem_project, gem_project, nnqp_solve

__version__ = "0.1.0"
